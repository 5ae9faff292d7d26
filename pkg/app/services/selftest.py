"""
自检服务
逐条运行各模块的平凡性质（恒等、零场、对称性、确定性），汇总为通过/失败报告
"""
import math
from fractions import Fraction
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy import integrate
from loguru import logger

from app.api.models import CountingSweep, ExperimentConfig
from app.core.torus_lattice import TorusLattice, frequency_of, measure_integrate
from app.core.spectral_field import (
    FrequencyMultiplier,
    SpectralField,
    SpaceTimeField,
    apply_multiplier,
    bessel_multiplier,
    bump_window,
    fft_forward,
    fft_inverse,
    lp_spacetime_norm,
    mass,
    propagate_linear,
    sobolev_norm,
    window_grid,
    xsb_norm,
)
from app.core.nls_solver import NLSSolver, SolverConfig, energy, evolve, random_hs_field, rescale
from app.core.imethod import IMethodParams, apply_I, first_energy, m_symbol, smoothing_check
from app.core.multilinear import constant_symbol, elongate, gamma_n_enumerate, lambda_n, product_m_symbol
from app.core.modified_energy import (
    differentiation_check,
    increment_check,
    m10_symbol,
    m6_eval,
    second_energy,
    tr_decomposition_2d,
)
from app.core.lattice_counting import (
    CountingQuery1D,
    CountingQuery2D,
    LatticePolygon,
    Sector,
    arc_lattice_points,
    enumerate_A_lambda_2d,
    enumerate_S_1d,
    gauss_count,
    pick_area,
    pick_counts,
    sup_count_M,
)
from app.services.experiment_runner import ExperimentRunner
from app.services.strichartz_bench import (
    BilinearTrial,
    annulus_mask,
    random_annulus_field,
    bilinear_ratio,
    linear_strichartz_ratio,
)

Check = Callable[[], str]


def _close(actual: float, expected: float, tol: float, what: str):
    scale = max(abs(expected), 1.0)
    if not abs(actual - expected) <= tol * scale:
        raise AssertionError(f"{what}: 得到 {actual!r}, 期望 {expected!r}")


def _require(condition: bool, what: str):
    if not condition:
        raise AssertionError(what)


def _small_field(d: int = 1, lam: float = 1.0, M: int = 8, seed: int = 0, amplitude: float = 1.0) -> SpectralField:
    return random_hs_field(TorusLattice(d=d, lam=lam, M=M), 0.5, seed, amplitude)


# ---- torus_lattice ----

def check_measure_integrate() -> str:
    l1 = TorusLattice(d=1, lam=2.0, M=8)
    _close(measure_integrate(l1, np.ones(8)).real, 4.0, 1e-15, "常数符号")
    _close(abs(measure_integrate(l1, np.zeros(8))), 0.0, 0.0, "零符号")
    l2 = TorusLattice(d=2, lam=4.0, M=8)
    _close(measure_integrate(l2, {(0, 0): 1.0}).real, 1.0 / 16.0, 1e-15, "单点质量")
    return "3 例"


def check_frequency_of() -> str:
    _require(np.allclose(frequency_of(TorusLattice(d=1, lam=1.0, M=8), 3), [3.0]), "λ=1")
    _require(np.allclose(frequency_of(TorusLattice(d=2, lam=4.0, M=8), (2, -1)), [0.5, -0.25]), "λ=4")
    _require(np.allclose(frequency_of(TorusLattice(d=1, lam=2.0, M=8), 0), [0.0]), "零指标")
    return "3 例"


# ---- field_spectral ----

def check_fft() -> str:
    l = TorusLattice(d=1, lam=2.0, M=8)
    f = fft_forward(l, np.full(8, 3.0))
    _close(f.coefficient(0).real, 6.0, 1e-14, "常数函数的零模")
    _require(np.allclose(f.coeffs[1:], 0.0, atol=1e-14), "常数函数的非零模")
    g = _small_field(d=2, lam=3.0)
    back = fft_forward(g.lattice, fft_inverse(g))
    _require(np.max(np.abs(back.coeffs - g.coeffs)) <= 1e-12 * np.max(np.abs(g.coeffs)), "往返变换")
    return "常数与往返"


def check_sobolev_norm() -> str:
    f = _small_field()
    _close(sobolev_norm(f, 0.0), math.sqrt(mass(f)), 1e-14, "s=0")
    l = TorusLattice(d=1, lam=1.0, M=8)
    _close(sobolev_norm(SpectralField.zeros(l), 1.0), 0.0, 0.0, "零场")
    _close(sobolev_norm(SpectralField.from_coefficients(l, {3: 1.0}), 1.0), 4.0, 1e-14, "点质量")
    return "3 例"


def check_propagate_linear() -> str:
    f = _small_field(d=2)
    _require(np.array_equal(propagate_linear(f, 0.0).coeffs, f.coeffs), "t=0")
    _close(mass(propagate_linear(f, 0.37)), mass(f), 1e-12, "幺正性")
    return "t=0 与幺正性"


def check_xsb_norm() -> str:
    f = _small_field()
    frames = 128
    t0, dt = window_grid(frames)
    times = t0 + dt * np.arange(frames)
    u = SpaceTimeField.free_evolution(f, t0, dt, frames, window=bump_window(times))
    eta_sq, _ = integrate.quad(lambda t: bump_window(np.array([t]))[0] ** 2, -2.0, 2.0, points=[-1.0, 1.0])
    _close(xsb_norm(u, 0.0, 0.0), math.sqrt(eta_sq * mass(f)), 1e-3, "自由解")
    zero = SpaceTimeField.free_evolution(SpectralField.zeros(f.lattice), t0, dt, frames)
    _close(xsb_norm(zero, 0.0, 0.0), 0.0, 0.0, "零场")
    return "自由解与零场"


def check_lp_spacetime_norm() -> str:
    f = _small_field(d=2, lam=2.0)
    frames = 64
    t0, dt = window_grid(frames)
    u = SpaceTimeField.free_evolution(f, t0, dt, frames, window=bump_window(t0 + dt * np.arange(frames)))
    _close(lp_spacetime_norm(u, 2.0), xsb_norm(u, 0.0, 0.0), 1e-10, "p=2 Parseval")
    l = TorusLattice(d=1, lam=1.0, M=8)
    c = SpectralField.from_coefficients(l, {0: 1.5})
    flat = SpaceTimeField(l, 0.0, 1.0 / 16, np.stack([c.coeffs] * 16))
    _close(lp_spacetime_norm(flat, 4.0), 1.5, 1e-12, "常数场")
    return "Parseval 与常数场"


def check_apply_multiplier() -> str:
    f = _small_field()
    l = f.lattice
    _require(np.array_equal(apply_multiplier(FrequencyMultiplier(l, np.ones(l.shape)), f).coeffs, f.coeffs), "恒等符号")
    _require(apply_multiplier(FrequencyMultiplier(l, np.zeros(l.shape)), f).is_zero(), "零符号")
    _close(sobolev_norm(apply_multiplier(bessel_multiplier(l, 1.0), f), 0.0), sobolev_norm(f, 1.0), 1e-13, "Bessel 权")
    return "3 例"


# ---- nls_solver ----

def check_evolve_zero() -> str:
    l = TorusLattice(d=1, lam=1.0, M=8)
    trajectory = evolve(SpectralField.zeros(l), SolverConfig(dt=1e-2, t_end=0.1))
    _require(not np.any(trajectory.coeffs), "零初值轨道非零")
    return f"{trajectory.n_frames} 帧"


def check_energy() -> str:
    l = TorusLattice(d=1, lam=2.0, M=8)
    _close(energy(SpectralField.zeros(l)), 0.0, 0.0, "零场")
    f = _small_field(d=2, lam=2.0)
    shifted = SpectralField(f.lattice, f.coeffs * np.exp(-2j * np.pi * f.lattice.wavenumber_grid()[0] * 0.37))
    _close(energy(shifted), energy(f), 1e-12, "平移不变性")
    return "零场与平移"


def check_rescale() -> str:
    f = _small_field()
    _require(np.allclose(rescale(f, 1.0).coeffs, f.coeffs, rtol=0, atol=0), "λ=1 恒等")
    return "λ=1"


# ---- imethod ----

def check_imethod() -> str:
    l = TorusLattice(d=1, lam=1.0, M=8)
    _require(np.all(m_symbol(IMethodParams(N=2.0, s=1.0), l).symbol == 1.0), "s=1 时 m ≡ 1")
    p = IMethodParams(N=4.0, s=0.5)
    f = _small_field()
    _require(np.array_equal(apply_I(p, f).coeffs, f.coeffs), "低频数据上 I 为恒等")
    _close(first_energy(p, f), energy(f), 1e-15, "低频数据上 E¹ = E")
    _close(first_energy(p, SpectralField.zeros(l)), 0.0, 0.0, "零场 E¹")
    ratio, upper = smoothing_check(IMethodParams(N=3.0, s=1.0), f, 0.5)
    _close(ratio, 1.0, 1e-14, "s=1 比值")
    _close(upper, 1.0, 1e-14, "s=1 上界比值")
    return "5 例"


# ---- multilinear ----

def check_gamma_n() -> str:
    l = TorusLattice(d=1, lam=1.0, M=8)
    count = sum(len(block) for block in gamma_n_enumerate(l, 2))
    _require(count == l.band_size, f"Γ₂ 元组数 {count} ≠ {l.band_size}")
    first = np.concatenate(list(gamma_n_enumerate(l, 4, mode="sample", count=50, seed=7)))
    second = np.concatenate(list(gamma_n_enumerate(l, 4, mode="sample", count=50, seed=7)))
    _require(np.array_equal(first, second), "采样不可复现")
    return f"Γ₂ = {count}"


def check_lambda_and_elongate() -> str:
    l = TorusLattice(d=1, lam=1.0, M=8)
    _close(lambda_n(constant_symbol(l, 4), SpectralField.zeros(l)), 0.0, 0.0, "零场 Λ₄")
    m2 = constant_symbol(l, 2)
    m6 = elongate(m2, 1, 4)
    _require(m6.arity == 6 and m6.value_at([1, 2, -3, 4, -1, -3]) == 1.0, "延长常数符号")
    _require(elongate(product_m_symbol(IMethodParams(N=1.0, s=0.5), l, 6), 2, 4).arity == 10, "阶数记账")
    return "3 例"


def check_m6() -> str:
    l = TorusLattice(d=1, lam=1.0, M=16)
    _close(m6_eval(IMethodParams(N=8.0, s=0.5), l, [1, 2, -3, 1, -2, 1]), 1.0, 1e-14, "低频区")
    p = IMethodParams(N=2.0, s=0.5)
    _close(m6_eval(p, l, [5, -5, 5, -5, 5, -5]), 0.4 ** 3, 1e-14, "完全对消回退")
    f = _small_field(amplitude=0.5)
    _close(second_energy(IMethodParams(N=4.0, s=0.5), f), energy(f), 1e-12, "低频数据上 E² = E")
    _close(second_energy(p, SpectralField.zeros(f.lattice)), 0.0, 0.0, "零场 E²")
    return "4 例"


def check_m10_real() -> str:
    l = TorusLattice(d=1, lam=1.0, M=8)
    symbol = m10_symbol(IMethodParams(N=1.0, s=0.5), l)
    ks = np.concatenate(list(gamma_n_enumerate(l, 10, mode="sample", count=200, seed=3)))
    values = symbol(ks)
    _require(np.isrealobj(values) and np.all(np.isfinite(values)), "M10 非实或非有限")
    return f"{len(ks)} 个元组"


def check_differentiation() -> str:
    l = TorusLattice(d=1, lam=2.0, M=8)
    symbol = product_m_symbol(IMethodParams(N=1.0, s=0.5), l, 4)
    f = random_hs_field(l, 0.5, 11)
    linear = NLSSolver(SolverConfig(dt=1e-5, t_end=1e-4, nonlinear=False)).evolve(f)
    report = differentiation_check(symbol, linear, nonlinear=False)
    _require(report.max_relative_error <= 1e-6, f"线性流误差 {report.max_relative_error:.3e}")
    zero = NLSSolver(SolverConfig(dt=1e-5, t_end=1e-4, nonlinear=False)).evolve(SpectralField.zeros(l))
    zero_report = differentiation_check(symbol, zero, nonlinear=False)
    _require(not np.any(zero_report.lhs) and not np.any(zero_report.rhs), "零场两端非零")
    return f"线性流误差 {report.max_relative_error:.1e}"


def check_increment() -> str:
    l = TorusLattice(d=1, lam=1.0, M=8)
    p = IMethodParams(N=4.0, s=0.5)
    f = random_hs_field(l, 0.5, 5, amplitude=0.1)
    trajectory = NLSSolver(SolverConfig(dt=1e-3, t_end=0.01, dealias=True)).evolve(f)
    report = increment_check(p, trajectory, 0.0, 0.01)
    _require(abs(report.rhs) <= 1e-12 and abs(report.lhs) <= 1e-8, f"低频数据: 左={report.lhs:.2e}, 右={report.rhs:.2e}")
    still = increment_check(p, trajectory, 0.0, 0.0)
    _require(still.lhs == 0.0 and still.rhs == 0.0, "δ=0")
    return f"左={report.lhs:.1e}"


def check_tr_decomposition() -> str:
    l = TorusLattice(d=2, lam=1.0, M=4)
    p = IMethodParams(N=4.0, s=0.7)
    f = random_hs_field(l, 0.7, 2, amplitude=0.1)
    trajectory = NLSSolver(SolverConfig(dt=1e-3, t_end=0.004, dealias=True)).evolve(f)
    report = tr_decomposition_2d(p, trajectory, 0.004)
    _require(report.tr1 == 0.0, f"Tr₁ 符号应恒为 0，得到 {report.tr1:.2e}")
    _require(abs(report.tr2) <= 1e-12 and abs(report.direct) <= 1e-8, "低频数据上的增量")
    start = tr_decomposition_2d(p, trajectory, 0.0)
    _require(start.tr1 == start.tr2 == start.direct == 0.0, "t=0")
    return f"直接差={report.direct:.1e}"


# ---- lattice_counting ----

def check_counting() -> str:
    triangle = LatticePolygon(((0, 0), (1, 0), (0, 1)))
    _require(pick_counts(triangle) == (0, 3), "单位三角形 (I, E)")
    _require(pick_area(triangle) == (Fraction(1, 2), Fraction(1, 2)), "单位三角形面积")
    _require(arc_lattice_points(25, arc=(0.1, 0.1)) == [], "空弧")
    degenerate = gauss_count(Sector(r1=0.0, r2=1.0, theta=0.0), 16.0)
    _require(degenerate <= 2 * 16 + 1, f"退化扇区 {degenerate} 个点")
    far = CountingQuery1D(lam=1.0, N1=8.0, N2=1.0, k=0.0, tau=1e6)
    _require(enumerate_S_1d(far) == [], "不可达 τ")
    q = CountingQuery1D(lam=2.0, N1=8.0, N2=2.0, k=8.0, tau=40.0, w=4.0)
    _close(sup_count_M([q]), math.sqrt(len(enumerate_S_1d(q)) / 2.0), 1e-15, "单查询 M")
    empty = CountingQuery2D(lam=1.0, N1=4.0, N2=0.5, a=4.0, b=0.0)
    _require(enumerate_A_lambda_2d(empty) == 0, "N2 窗为空")
    narrow = CountingQuery2D(lam=4.0, N1=8.0, N2=2.0, a=8.0, b=0.0, c=1.0)
    wide = CountingQuery2D(lam=4.0, N1=8.0, N2=2.0, a=8.0, b=0.0, c=2.0)
    _require(enumerate_A_lambda_2d(narrow) <= enumerate_A_lambda_2d(wide), "c 单调性")
    return "8 例"


# ---- strichartz_bench ----

def check_strichartz() -> str:
    l = TorusLattice(d=1, lam=2.0, M=32)
    phi = random_annulus_field(l, 4.0, seed=9)
    _close(mass(phi), 1.0, 1e-12, "单位 L²")
    _require(not np.any(phi.coeffs[~annulus_mask(l, 4.0)]), "环形外系数")
    _require(np.array_equal(phi.coeffs, random_annulus_field(l, 4.0, seed=9).coeffs), "种子可复现")
    trial = BilinearTrial(l, 4.0, 1.0, phi, SpectralField.zeros(l), frames=16)
    _close(bilinear_ratio(trial), 0.0, 0.0, "φ₂ = 0")
    ratio = linear_strichartz_ratio(TorusLattice(d=1, lam=1.0, M=8), 2.0, 0.0, 0.0, trials=2, frames=32)
    _close(ratio, 1.0, 1e-10, "p=2 Plancherel")
    return "5 例"


# ---- experiment_cli ----

def _tiny_config(**kwargs) -> ExperimentConfig:
    base = dict(name="selftest", M=8, N=[4.0], lams=[1.0], dt=1e-3, t_end=0.004, checkpoints=2, amplitude=0.1)
    base.update(kwargs)
    return ExperimentConfig(**base)


def check_cli() -> str:
    runner = ExperimentRunner(threads=1)
    try:
        out = runner.run_drift_1d(_tiny_config())
        _require(out["slopes.csv"].iloc[0]["flag"] == "undefined", "单个 N 的斜率应标记为未定义")
        _require(out["drift.csv"]["drift2"].max() <= 1e-8, "低频数据的 drift₂")

        out = runner.run_drift_2d(_tiny_config(d=2, M=4, s=0.7))
        _require(out["drift.csv"]["drift1"].max() <= 1e-8, "低频数据的 drift₁")

        auto = _tiny_config(s=0.7, lam_rule="auto", N=[float(n) for n in range(1, 65)])
        _require(all(lam <= n for lam, n in zip(auto.lambdas(), auto.N)), "auto 规则 λ ≤ N")

        empty = _tiny_config(counting=CountingSweep(lams=[], lams_2d=[], polygons=0, arc_max_r2=0, gauss_lams=[]))
        tables = runner.run_counting(empty)
        _require(tables["counting_1d.csv"].empty and "count" in tables["counting_1d.csv"].columns, "空扫描表头")

        small = _tiny_config(counting=CountingSweep(lams=[1.0, 2.0], N1s=[8.0], N2s=[1.0, 2.0], lams_2d=[1.0],
                                                    N1s_2d=[4.0], polygons=5, arc_max_r2=100, gauss_lams=[4.0]))
        first, second = runner.run_counting(small), runner.run_counting(small)
        _require(all(first[k].equals(second[k]) for k in first), "计数扫描不确定")
    finally:
        runner.shutdown()
    return "5 例"


CHECKS: List[Tuple[str, Check]] = [
    ("measure_integrate", check_measure_integrate),
    ("frequency_of", check_frequency_of),
    ("fft_forward", check_fft),
    ("sobolev_norm", check_sobolev_norm),
    ("propagate_linear", check_propagate_linear),
    ("xsb_norm", check_xsb_norm),
    ("lp_spacetime_norm", check_lp_spacetime_norm),
    ("apply_multiplier", check_apply_multiplier),
    ("evolve", check_evolve_zero),
    ("energy", check_energy),
    ("rescale", check_rescale),
    ("imethod", check_imethod),
    ("gamma_n_enumerate", check_gamma_n),
    ("lambda_n/elongate", check_lambda_and_elongate),
    ("m6/second_energy", check_m6),
    ("m10_symbol", check_m10_real),
    ("differentiation_check", check_differentiation),
    ("increment_check", check_increment),
    ("tr_decomposition_2d", check_tr_decomposition),
    ("lattice_counting", check_counting),
    ("strichartz_bench", check_strichartz),
    ("experiment_cli", check_cli),
]


def run_selftest() -> List[Dict]:
    """
    运行全部自检

    Returns:
        每项一行：name, status ("pass" / "fail"), detail
    """
    rows = []
    for name, check in CHECKS:
        try:
            detail = check()
            rows.append({"name": name, "status": "pass", "detail": detail})
            logger.info(f"✓ {name}: {detail}")
        except Exception as e:
            rows.append({"name": name, "status": "fail", "detail": str(e)})
            logger.error(f"✗ {name}: {e}")
    failed = sum(r["status"] == "fail" for r in rows)
    logger.info(f"自检完成: {len(rows) - failed}/{len(rows)} 通过")
    return rows
