import pytest
from pathlib import Path
import sys

import numpy as np

# 添加项目根目录到Python路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.core.exceptions import DomainError
from app.core.torus_lattice import TorusLattice
from app.core.spectral_field import (
    FrequencyMultiplier,
    SpaceTimeField,
    SpectralField,
    apply_multiplier,
    bessel_multiplier,
    bump_window,
    fft_forward,
    fft_inverse,
    homogeneous_sobolev_norm,
    inner_product,
    kinetic_norm,
    lp_spacetime_norm,
    mass,
    multiply,
    potential_integral,
    power_nonlinearity,
    propagate_linear,
    sobolev_norm,
    window_grid,
    xsb_norm,
)
from app.core.nls_solver import random_hs_field


@pytest.fixture
def field():
    return random_hs_field(TorusLattice(d=1, lam=2.0, M=16), 0.5, seed=3)


@pytest.fixture
def field_2d():
    return random_hs_field(TorusLattice(d=2, lam=3.0, M=8), 0.5, seed=4)


def test_fft_constant():
    """常数 3 在 [0, 2] 上的零模为 6"""
    l = TorusLattice(d=1, lam=2.0, M=8)
    f = fft_forward(l, np.full(8, 3.0))
    assert f.coefficient(0).real == pytest.approx(6.0)
    assert np.allclose(f.coeffs[1:], 0.0, atol=1e-14)


def test_fft_plane_wave():
    """e^{2πi·3x/λ} 的系数为 λ，质量为 λ"""
    l = TorusLattice(d=1, lam=2.0, M=8)
    (x,) = l.physical_grid()
    f = fft_forward(l, np.exp(2j * np.pi * 3 * x / l.lam))
    assert f.coefficient(3) == pytest.approx(2.0)
    assert mass(f) == pytest.approx(2.0)


def test_fft_roundtrip(field_2d):
    back = fft_forward(field_2d.lattice, fft_inverse(field_2d))
    assert np.allclose(back.coeffs, field_2d.coeffs, atol=1e-12)


def test_field_is_immutable(field):
    with pytest.raises(AttributeError):
        field.coeffs = None
    with pytest.raises(ValueError):
        field.coeffs[0] = 1.0


def test_from_coefficients_out_of_band():
    with pytest.raises(DomainError):
        SpectralField.from_coefficients(TorusLattice(d=1, lam=1.0, M=8), {4: 1.0})


def test_conjugate_matches_physical(field_2d):
    """f̄ 的谱在物理空间上就是取共轭"""
    assert np.allclose(fft_inverse(field_2d.conjugate()), np.conj(fft_inverse(field_2d)), atol=1e-12)


def test_parseval(field):
    """∫f ḡ 与网格求积一致"""
    other = random_hs_field(field.lattice, 0.3, seed=8)
    grid = np.sum(fft_inverse(field) * np.conj(fft_inverse(other))) * field.lattice.spacing
    assert inner_product(field, other) == pytest.approx(complex(grid))
    assert inner_product(field, field).real == pytest.approx(mass(field))


def test_multiply_modes():
    """e₁·e₂ = e₃，系数为 λ^{-d}"""
    l = TorusLattice(d=1, lam=2.0, M=8)
    f = SpectralField.from_coefficients(l, {1: 1.0})
    g = SpectralField.from_coefficients(l, {2: 1.0})
    assert multiply(f, g).coefficient(3) == pytest.approx(0.5)


def test_multiply_out_of_band_is_projected():
    """带外乘积被投影掉，不混叠回带内"""
    l = TorusLattice(d=1, lam=1.0, M=8)
    f = SpectralField.from_coefficients(l, {3: 1.0})
    assert np.allclose(multiply(f, f).coeffs, 0.0, atol=1e-14)


def test_power_nonlinearity_constant():
    """常数 a 上 |u|⁴u = a⁵"""
    l = TorusLattice(d=1, lam=1.0, M=8)
    f = SpectralField.from_coefficients(l, {0: 0.5})
    assert power_nonlinearity(f, 2).coefficient(0).real == pytest.approx(0.5 ** 5)
    assert potential_integral(f, 6) == pytest.approx(0.5 ** 6)


def test_potential_integral_matches_grid(field):
    """p = 2 时等于质量"""
    assert potential_integral(field, 2) == pytest.approx(mass(field))


def test_sobolev_norms():
    l = TorusLattice(d=1, lam=1.0, M=8)
    point = SpectralField.from_coefficients(l, {3: 1.0})
    assert sobolev_norm(point, 1.0) == pytest.approx(4.0)
    assert kinetic_norm(SpectralField.from_coefficients(l, {1: 1.0})) == pytest.approx(2 * np.pi)
    assert homogeneous_sobolev_norm(SpectralField.from_coefficients(l, {0: 2.0}), 1.0) == 0.0
    assert sobolev_norm(SpectralField.zeros(l), 1.0) == 0.0


def test_propagate_linear(field_2d):
    """单位性与半群性"""
    assert np.array_equal(propagate_linear(field_2d, 0.0).coeffs, field_2d.coeffs)
    assert mass(propagate_linear(field_2d, 0.37)) == pytest.approx(mass(field_2d))
    twice = propagate_linear(propagate_linear(field_2d, 0.1), 0.2)
    assert np.allclose(twice.coeffs, propagate_linear(field_2d, 0.3).coeffs)


def test_propagate_phase():
    l = TorusLattice(d=1, lam=1.0, M=8)
    f = SpectralField.from_coefficients(l, {1: 1.0})
    assert propagate_linear(f, 0.01).coefficient(1) == pytest.approx(np.exp(-4j * np.pi ** 2 * 0.01))


def test_apply_multiplier(field):
    l = field.lattice
    assert apply_multiplier(FrequencyMultiplier(l, np.zeros(l.shape)), field).is_zero()
    lifted = apply_multiplier(bessel_multiplier(l, 1.0), field)
    assert sobolev_norm(lifted, 0.0) == pytest.approx(sobolev_norm(field, 1.0))


def test_multiplier_rejects_nonfinite():
    l = TorusLattice(d=1, lam=1.0, M=8)
    with pytest.raises(DomainError):
        FrequencyMultiplier(l, np.full(8, np.inf))


def test_bump_window():
    values = bump_window(np.array([0.0, 1.0, 1.5, -1.5, 2.0, 2.5]))
    assert values[:2].tolist() == [1.0, 1.0]
    assert values[2] == pytest.approx(np.exp(-1.0 / 3.0))
    assert values[3] == values[2]
    assert values[4:].tolist() == [0.0, 0.0]


def test_window_grid():
    assert window_grid(128) == (-2.0, 1.0 / 32.0)


def test_xsb_norm_free_wave(field):
    """无窗自由解：‖u‖²_{X^{0,b}} = T·dt·‖φ‖²，与 b 无关"""
    u = SpaceTimeField.free_evolution(field, 0.0, 0.25, 16)
    expected = np.sqrt(16 * 0.25 * mass(field))
    assert xsb_norm(u, 0.0, 0.0) == pytest.approx(expected)
    assert xsb_norm(u, 0.0, 0.7) == pytest.approx(expected)


def test_xsb_norm_needs_frames(field):
    u = SpaceTimeField.free_evolution(field, 0.0, 0.25, 4)
    with pytest.raises(DomainError):
        xsb_norm(u, 0.0, 0.0)


def test_lp_norm_parseval(field_2d):
    """p = 2 时 L^p 与 X^{0,0} 一致"""
    t0, dt = window_grid(32)
    u = SpaceTimeField.free_evolution(field_2d, t0, dt, 32).with_window(bump_window)
    assert lp_spacetime_norm(u, 2.0) == pytest.approx(xsb_norm(u, 0.0, 0.0), rel=1e-10)
    with pytest.raises(DomainError):
        lp_spacetime_norm(u, 0.5)


@pytest.mark.parametrize("p, moment", [
    (4.0, lambda a, b: (a + b) ** 2 + 2 * a * b),
    (6.0, lambda a, b: (a + b) ** 3 + 6 * (a + b) * a * b),
])
def test_lp_norm_two_modes_exact(p, moment):
    """两个模 ±6 的 |u|^p 含频率 12 的倍数，求积网格须按 p 放大"""
    l = TorusLattice(d=1, lam=1.0, M=16)
    phi = SpectralField.from_coefficients(l, {-6: 1.0, 6: 0.5})
    u = SpaceTimeField.free_evolution(phi, 0.0, 0.125, 8)
    expected = (8 * 0.125 * moment(1.0, 0.25)) ** (1.0 / p)
    assert lp_spacetime_norm(u, p) == pytest.approx(expected, rel=1e-12)


def test_space_time_field(field):
    u = SpaceTimeField.free_evolution(field, -1.0, 0.5, 5)
    assert u.times.tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert u.frame_at(0.5) == 3
    assert np.allclose(u.frame(2).coeffs, field.coeffs)
    with pytest.raises(DomainError):
        u.frame_at(0.25)
    rebuilt = SpaceTimeField.from_frames(u.t0, u.dt, u.frames)
    assert np.array_equal(rebuilt.coeffs, u.coeffs)


def test_space_time_field_rejects_mixed_lattices(field):
    other = SpectralField.zeros(TorusLattice(d=1, lam=1.0, M=16))
    with pytest.raises(DomainError):
        SpaceTimeField.from_frames(0.0, 1.0, [field, other])
