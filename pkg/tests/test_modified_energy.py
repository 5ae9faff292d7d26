import pytest
from fractions import Fraction
from pathlib import Path
import sys

import numpy as np

# 添加项目根目录到Python路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.core.exceptions import DomainError
from app.core.torus_lattice import TorusLattice
from app.core.spectral_field import SpectralField, potential_integral
from app.core.nls_solver import SolverConfig, energy, evolve, random_hs_field
from app.core.imethod import IMethodParams
from app.core.multilinear import (
    ResonanceLog,
    combine_symbols,
    gamma_n_enumerate,
    kinetic_symbol,
    lambda_n,
    product_m_symbol,
)
from app.core.modified_energy import (
    coercivity_gap,
    derivative_rhs,
    differentiation_check,
    energy_gap,
    increment_check,
    m6_bound_probe,
    m6_eval,
    m6_symbol,
    m10_symbol,
    second_energy,
    second_energy_estimate,
    tr_decomposition_2d,
    tr_integrands,
)

HALF = IMethodParams(N=2.0, s=0.5)


@pytest.fixture
def unit_line():
    return TorusLattice(d=1, lam=1.0, M=16)


def _m6_oracle(tup):
    """N = 2, s = 1/2, λ = 1 时 M6 的有理数参考值：m²|n|² = n²（|n| ≤ 2）或 2|n|"""
    def weighted(n):
        return Fraction(n * n) if abs(n) <= 2 else Fraction(2 * abs(n))
    signs = [1, -1, 1, -1, 1, -1]
    num = sum(s * weighted(n) for s, n in zip(signs, tup))
    den = sum(s * n * n for s, n in zip(signs, tup))
    return num / den


def test_m6_regular_tuple(unit_line):
    tup = [5, -3, 1, 2, -4, -1]
    assert _m6_oracle(tup) == Fraction(2, 7)
    assert m6_eval(HALF, unit_line, tup) == pytest.approx(2.0 / 7.0, rel=1e-12)


def test_m6_excluded_tuple(unit_line):
    """分母为零、分子非零：排除并记入日志"""
    log = ResonanceLog()
    assert m6_eval(HALF, unit_line, [1, -5, 7, -5, 1, 1], log) is None
    assert log.excluded == 1 and log.fallback == 0
    row = log.to_frame().iloc[0]
    assert row["denominator_int"] == 0
    assert row["numerator_int"] == pytest.approx(-5.0)
    assert row["tag"] == "numerator-nonzero"


def test_m6_fallback_tuple(unit_line):
    """分母与分子都为零时取 Π m_j"""
    log = ResonanceLog()
    assert m6_eval(HALF, unit_line, [5, -5, 5, -5, 5, -5], log) == pytest.approx(0.4 ** 3)
    assert log.fallback == 1


def test_m6_off_hyperplane(unit_line):
    with pytest.raises(DomainError):
        m6_eval(HALF, unit_line, [1, 0, 0, 0, 0, 0])


def test_m6_low_frequency_is_one():
    """全部频率不超过 N 时 M6 ≡ 1"""
    l = TorusLattice(d=1, lam=1.0, M=8)
    ks = np.array([[3, -2, 1, -1, 2, -3], [1, 1, 1, -1, -1, -1], [0, 0, 0, 0, 0, 0]])[:, :, None]
    assert np.allclose(m6_symbol(IMethodParams(N=4.0, s=0.5), l)(ks), 1.0)


@pytest.fixture
def small_field():
    return random_hs_field(TorusLattice(d=1, lam=1.0, M=8), 0.5, seed=11, amplitude=0.5)


def test_second_energy_below_threshold(small_field):
    """N 高于全部频率时 E² = E"""
    assert second_energy(IMethodParams(N=8.0, s=0.5), small_field) == pytest.approx(energy(small_field), rel=1e-10)


def test_energy_gap_is_sextic_difference(small_field):
    """E² − E¹ = (1/6)Λ₆(M6 − Πm)"""
    p = IMethodParams(N=1.0, s=0.5)
    l = small_field.lattice
    difference = combine_symbols([(1.0, m6_symbol(p, l)), (-1.0, product_m_symbol(p, l, 6))])
    expected = lambda_n(difference, small_field) / 6.0
    assert energy_gap(p, small_field) == pytest.approx(expected, rel=1e-8, abs=1e-13)


def test_second_energy_parts(small_field):
    p = IMethodParams(N=1.0, s=0.5)
    est = second_energy_estimate(p, small_field, mode="exhaustive")
    assert not est.sampled
    assert est.value == pytest.approx(est.kinetic + est.sextic)
    assert coercivity_gap(p, small_field) == pytest.approx(-2.0 * est.sextic)


def test_second_energy_sampled(small_field):
    p = IMethodParams(N=1.0, s=0.5)
    est = second_energy_estimate(p, small_field, mode="sampled", samples=20_000, seed=2)
    assert est.sampled and est.stderr > 0


def test_second_energy_zero_and_2d():
    p = IMethodParams(N=1.0, s=0.5)
    assert second_energy(p, SpectralField.zeros(TorusLattice(d=1, lam=1.0, M=8))) == 0.0
    with pytest.raises(DomainError):
        second_energy(p, random_hs_field(TorusLattice(d=2, lam=1.0, M=4), 0.5, seed=0))


def test_m10_representative(unit_line):
    """M10 = (1/6) Σ_j (−1)^{j+1} M6(合并 j..j+4)，排除项按 0 计"""
    p = IMethodParams(N=1.0, s=0.5)
    tup = [3, -2, 1, -1, 2, -4, 5, -3, 1, -2]
    expected = 0.0
    for j in range(1, 7):
        reduced = tup[:j - 1] + [sum(tup[j - 1:j + 4])] + tup[j + 4:]
        value = m6_eval(p, unit_line, reduced)
        expected += (-1) ** (j + 1) * (value or 0.0) / 6.0
    assert m10_symbol(p, unit_line).value_at(tup) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_m10_symmetrized_is_invariant(unit_line):
    """对称化后交换两个奇位置不改变取值"""
    p = IMethodParams(N=1.0, s=0.5)
    sym = m10_symbol(p, unit_line, symmetrize=True)
    tup = [3, -2, 1, -1, 2, -4, 5, -3, 1, -2]
    swapped = [1, -2, 3, -1, 2, -4, 5, -3, 1, -2]
    assert sym.value_at(tup) == pytest.approx(sym.value_at(swapped), rel=1e-10)


def test_m10_requires_1d():
    with pytest.raises(DomainError):
        m10_symbol(HALF, TorusLattice(d=2, lam=1.0, M=4))


def test_collapsed_and_elongated_routes_agree(small_field):
    symbol = product_m_symbol(IMethodParams(N=1.0, s=0.5), small_field.lattice, 2)
    collapsed = derivative_rhs(symbol, small_field, route="collapsed")
    elongated = derivative_rhs(symbol, small_field, route="elongated")
    assert collapsed == pytest.approx(elongated, rel=1e-9)
    with pytest.raises(DomainError):
        derivative_rhs(symbol, small_field, route="other")


def test_differentiation_law_linear_flow(small_field):
    """线性流上 dΛ₄/dt 与 iΛ₄(M·Σ(−1)^j(2πk_j)²) 一致"""
    trajectory = evolve(small_field, SolverConfig(dt=1e-5, t_end=1e-4, nonlinear=False))
    symbol = product_m_symbol(IMethodParams(N=1.0, s=0.5), small_field.lattice, 4)
    report = differentiation_check(symbol, trajectory, nonlinear=False)
    assert len(report.lhs) == trajectory.n_frames - 4
    assert report.max_relative_error <= 1e-6


def test_increment_identity():
    """Galerkin 轨道上 E² 的增量等于 dE²/dt 的时间积分"""
    p = IMethodParams(N=1.0, s=0.5)
    u0 = random_hs_field(TorusLattice(d=1, lam=1.0, M=8), 0.5, seed=21)
    trajectory = evolve(u0, SolverConfig(dt=1e-6, t_end=1e-4, dealias=True))
    report = increment_check(p, trajectory, T=0.0, delta=1e-4)
    assert report.frames == 101
    assert report.lhs != 0.0
    assert report.relative <= 5e-2


def test_increment_zero_window(small_field):
    trajectory = evolve(small_field, SolverConfig(dt=1e-3, t_end=0.002, dealias=True))
    report = increment_check(HALF, trajectory, T=0.001, delta=0.0)
    assert report.lhs == report.rhs == 0.0
    with pytest.raises(DomainError):
        increment_check(HALF, trajectory, T=0.0, delta=-1.0)


def test_tr_integrands_methods_agree():
    """谱方法与超平面求和给出相同的 Tr 被积函数"""
    p = IMethodParams(N=1.0, s=0.7)
    u = random_hs_field(TorusLattice(d=2, lam=1.0, M=4), 0.7, seed=5)
    spectral = tr_integrands(p, u, method="spectral")
    multilinear = tr_integrands(p, u, method="multilinear")
    assert multilinear["tr1"] == pytest.approx(spectral["tr1"], rel=1e-9, abs=1e-12)
    assert multilinear["tr2"] == pytest.approx(spectral["tr2"], rel=1e-9, abs=1e-12)


def test_tr_decomposition():
    """E¹(u(t)) − E¹(u(0)) ≈ Tr₁ + Tr₂"""
    p = IMethodParams(N=1.0, s=0.5)
    u0 = random_hs_field(TorusLattice(d=2, lam=1.0, M=8), 0.5, seed=6)
    trajectory = evolve(u0, SolverConfig(dt=2e-6, t_end=2e-4, dealias=True))
    report = tr_decomposition_2d(p, trajectory, t=2e-4, method="spectral")
    assert report.direct != 0.0
    assert report.relative <= 5e-2


def test_tr_decomposition_requires_2d(small_field):
    trajectory = evolve(small_field, SolverConfig(dt=1e-3, t_end=0.002))
    with pytest.raises(DomainError):
        tr_decomposition_2d(HALF, trajectory, t=0.002)


def test_m6_bound_probe():
    """小格点上全部频率低于 N 时穷举部分的最大值为 1"""
    row = m6_bound_probe(IMethodParams(N=8.0, s=0.5), TorusLattice(d=1, lam=1.0, M=8), random_tuples=1000)
    assert row["exhaustive_max"] == pytest.approx(1.0)
    assert row["exhaustive_tuples"] > 0
    assert row["bound"] >= row["exhaustive_max"]
    with pytest.raises(DomainError):
        m6_bound_probe(HALF, TorusLattice(d=2, lam=1.0, M=4), random_tuples=10)


def test_coercivity_gap_values(small_field):
    """‖∇If‖² − 2E² = −(1/3)Λ₆(M6)；N 高于全部频率时为 −(1/3)∫|f|⁶"""
    high = IMethodParams(N=8.0, s=0.5)
    sextic = potential_integral(small_field, 6)
    assert coercivity_gap(high, small_field) == pytest.approx(-sextic / 3.0, rel=1e-10)
    assert energy_gap(high, small_field) == pytest.approx(0.0, abs=1e-10 * sextic)
    p = IMethodParams(N=1.0, s=0.5)
    expected = -lambda_n(m6_symbol(p, small_field.lattice), small_field) / 3.0
    assert coercivity_gap(p, small_field) == pytest.approx(expected, rel=1e-10)


def test_m10_vanishes_below_threshold():
    """全部 |k_j| 远小于 N 时 M10 ≡ 0"""
    l = TorusLattice(d=1, lam=1.0, M=8)
    symbol = m10_symbol(IMethodParams(N=64.0, s=0.5), l, band_limited=False)
    blocks = list(gamma_n_enumerate(l, 10, mode="sample", count=500, seed=0))
    assert sum(len(b) for b in blocks) == 500
    for block in blocks:
        assert np.allclose(symbol(block), 0.0, atol=1e-14)


def test_differentiation_law_nonlinear_flow():
    """非线性 Galerkin 轨道上 d/dt Λ₂(m₁k₁·m₂k₂) 与微分律一致"""
    l = TorusLattice(d=1, lam=1.0, M=16)
    u0 = random_hs_field(l, 0.5, seed=13, amplitude=0.5)
    trajectory = evolve(u0, SolverConfig(dt=1e-4, t_end=1e-3, dealias=True))
    report = differentiation_check(kinetic_symbol(HALF, l), trajectory, nonlinear=True)
    assert len(report.lhs) == 7
    assert report.max_relative_error <= 1e-3


def test_increment_identity_long_window():
    """M = 8、N = 2、s = 1/2、δ = 0.01 时增量恒等式成立"""
    u0 = random_hs_field(TorusLattice(d=1, lam=1.0, M=8), 0.5, seed=21, amplitude=1.0)
    trajectory = evolve(u0, SolverConfig(dt=2e-6, t_end=0.01, dealias=True, save_every=50))
    report = increment_check(HALF, trajectory, T=0.0, delta=0.01)
    assert report.frames == 101
    assert report.lhs != 0.0
    assert report.relative <= 1e-2
