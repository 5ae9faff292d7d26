"""
NLS 求解器模块
T^d_λ 上 iu_t + Δu − |u|^{4/d}u = 0 的伪谱 Strang 分裂积分器，
T^d 与 T^d_λ 之间的伸缩映射，以及守恒量监测
"""
from fractions import Fraction
from typing import Dict, Iterable, List, Literal, Optional

import numpy as np
from scipy import fft as sfft
from loguru import logger
from pydantic import BaseModel, Field, model_validator

from app.core.config import settings
from app.core.exceptions import DomainError, IntegrationError
from app.core.torus_lattice import TorusLattice
from app.core.spectral_field import (
    TWO_PI,
    SpectralField,
    SpaceTimeField,
    mass,
    potential_integral,
    power_nonlinearity_coeffs,
)


class SolverConfig(BaseModel):
    """求解器配置"""

    dt: float = Field(gt=0)
    t_end: float = Field(ge=0)
    scheme: Literal["strang_split"] = "strang_split"
    dealias: bool = False
    nonlinear: bool = True
    save_every: int = Field(default=1, ge=1)

    @property
    def n_steps(self) -> int:
        steps = int(round(self.t_end / self.dt))
        if abs(steps * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise DomainError(f"t_end={self.t_end} 不是 dt={self.dt} 的整数倍")
        return steps


class ConservationReport(BaseModel):
    """守恒量随时间的记录"""

    times: List[float]
    mass: List[float]
    energy: List[float]

    @model_validator(mode="after")
    def _check_lengths(self):
        if not len(self.times) == len(self.mass) == len(self.energy):
            raise ValueError("times、mass、energy 长度必须一致")
        return self

    @property
    def mass_drift(self) -> float:
        """最大相对质量漂移"""
        m = np.asarray(self.mass)
        if m[0] == 0:
            return float(np.max(np.abs(m)))
        return float(np.max(np.abs(m - m[0])) / m[0])

    @property
    def energy_drift(self) -> float:
        """终止时刻的能量漂移 |E(t_end) − E(0)|"""
        return abs(self.energy[-1] - self.energy[0])


def nonlinearity_half_power(d: int) -> int:
    """|u|^{4/d} = (|u|²)^q，1D q=2，2D q=1"""
    return 2 // d


class NLSSolver:
    """Strang 分裂积分器：半步线性、整步非线性、半步线性"""

    def __init__(self, config: SolverConfig):
        """
        初始化求解器

        Args:
            config: 求解器配置
        """
        self.config = config
        logger.debug(f"初始化NLS求解器: dt={config.dt}, t_end={config.t_end}, dealias={config.dealias}")

    def evolve(self, u0: SpectralField, reverse: bool = False) -> SpaceTimeField:
        """
        推进一条轨道

        Args:
            u0: 初值，Nyquist 系数必须为 0
            reverse: 为 True 时以 −dt 积分

        Returns:
            每 save_every 步保存一帧的时空场
        """
        cfg = self.config
        if not u0.nyquist_is_zero():
            raise DomainError("初值的 Nyquist 系数必须为 0")
        n_steps = cfg.n_steps
        if n_steps % cfg.save_every:
            raise DomainError(f"步数 {n_steps} 不是 save_every={cfg.save_every} 的整数倍")

        lattice = u0.lattice
        q = nonlinearity_half_power(lattice.d)
        dt = -cfg.dt if reverse else cfg.dt
        half_phase = np.exp(-0.5j * TWO_PI ** 2 * lattice.k_norm_sq() * dt)

        coeffs = u0.coeffs.copy()
        frames = [coeffs.copy()]
        for step in range(1, n_steps + 1):
            coeffs = half_phase * coeffs
            if cfg.nonlinear:
                if cfg.dealias:
                    coeffs = self._galerkin_substep(lattice, coeffs, q, dt, step * dt)
                else:
                    coeffs = self._pointwise_substep(lattice, coeffs, q, dt)
            coeffs = half_phase * coeffs
            if not np.all(np.isfinite(coeffs)):
                raise IntegrationError("轨道出现非有限值", time=step * dt)
            if step % cfg.save_every == 0:
                frames.append(coeffs.copy())

        logger.debug(f"轨道完成: {n_steps} 步, {len(frames)} 帧")
        return SpaceTimeField(lattice, 0.0, abs(dt) * cfg.save_every, np.stack(frames))

    @staticmethod
    def _pointwise_substep(lattice: TorusLattice, coeffs: np.ndarray, q: int, dt: float) -> np.ndarray:
        # |u| 在该子步下逐点不变，相位可精确求解
        u = sfft.ifftn(coeffs)
        u = np.exp(-1j * dt * (np.abs(u) ** 2 * lattice.cell_volume ** -2) ** q) * u
        return sfft.fftn(u)

    @staticmethod
    def _galerkin_substep(lattice: TorusLattice, coeffs: np.ndarray, q: int, dt: float, t: float) -> np.ndarray:
        """带内投影的非线性子步 i v_t = P(|v|^{2q} v)，隐式中点法"""
        current = coeffs - 1j * dt * power_nonlinearity_coeffs(lattice, coeffs, q)
        scale = max(float(np.linalg.norm(coeffs)), 1e-300)
        for _ in range(settings.fixed_point_max_iter):
            midpoint = 0.5 * (coeffs + current)
            updated = coeffs - 1j * dt * power_nonlinearity_coeffs(lattice, midpoint, q)
            change = float(np.linalg.norm(updated - current)) / scale
            current = updated
            if change <= settings.fixed_point_tol:
                return current
            if not np.isfinite(change):
                break
        raise IntegrationError("隐式中点迭代未收敛", time=t)


def evolve(u0: SpectralField, cfg: SolverConfig) -> SpaceTimeField:
    """按配置推进初值"""
    return NLSSolver(cfg).evolve(u0)


def energy(u: SpectralField) -> float:
    """
    E(u) = ½‖∇u‖² + d/(2(d+2)) ∫|u|^{2+4/d}

    梯度项用谱方法，势能项在补零网格上精确求积。
    """
    d = u.lattice.d
    kinetic = 0.5 * float(
        np.sum(TWO_PI ** 2 * u.lattice.k_norm_sq() * np.abs(u.coeffs) ** 2) * u.lattice.measure_weight
    )
    potential = d / (2.0 * (d + 2)) * potential_integral(u, 2 + 4 // d)
    return kinetic + potential


def conservation_report(trajectory: SpaceTimeField) -> ConservationReport:
    """逐帧计算质量与能量"""
    frames = trajectory.frames
    return ConservationReport(
        times=trajectory.times.tolist(),
        mass=[mass(f) for f in frames],
        energy=[energy(f) for f in frames],
    )


def rescale(u: SpectralField, lam: float, M: Optional[int] = None) -> SpectralField:
    """
    伸缩映射 u^λ(x) = λ^{−d/2} u(x/λ)

    同一整数指标搬到 λ-格点上，系数乘以 λ^{d/2}，因而 L² 范数不变。

    Args:
        u: T^d 上的场（λ = 1）
        lam: 目标周期，λ ≥ 1
        M: 目标带限，缺省与原场相同
    """
    if u.lattice.lam != 1.0:
        raise DomainError("伸缩映射的输入必须定义在 λ=1 的环面上")
    if lam < 1:
        raise DomainError(f"λ={lam} 必须 ≥ 1")
    d = u.lattice.d
    target = TorusLattice(d=d, lam=lam, M=M or u.lattice.M)
    if target.M == u.lattice.M:
        return SpectralField(target, u.coeffs * lam ** (d / 2))

    support = np.argwhere(u.coeffs != 0)
    indices = np.where(support >= u.lattice.M // 2, support - u.lattice.M, support)
    if len(indices) and not np.all(target.in_band(indices, allow_nyquist=False)):
        raise DomainError(f"谱支撑超出目标带限 M={target.M}")
    coeffs = np.zeros(target.shape, dtype=np.complex128)
    for src, n in zip(support, indices):
        coeffs[tuple(target.flat_position(n))] = u.coeffs[tuple(src)] * lam ** (d / 2)
    return SpectralField(target, coeffs)


def random_hs_field(
    lattice: TorusLattice,
    s: float,
    seed: int,
    amplitude: float = 1.0,
    max_index: Optional[float] = None,
) -> SpectralField:
    """
    随机带限初值：|û(n)| ∝ ⟨n/λ⟩^{−s−d/2−0.01}，相位均匀随机

    Args:
        lattice: 环面格点
        s: 目标正则性
        seed: 随机种子
        amplitude: 归一化后的 L² 范数
        max_index: 若给出，仅保留 |n| ≤ max_index 的系数
    """
    rng = np.random.default_rng(seed)
    profile = (1.0 + lattice.k_norm()) ** (-s - lattice.d / 2 - 0.01)
    phases = np.exp(2j * np.pi * rng.random(lattice.shape))
    coeffs = profile * phases
    coeffs[lattice.nyquist_mask()] = 0
    if max_index is not None:
        coeffs[lattice.index_norm_sq() > max_index ** 2] = 0
    field = SpectralField(lattice, coeffs)
    norm = np.sqrt(mass(field))
    if norm == 0:
        raise DomainError("随机场的支撑为空")
    return field * (amplitude / norm)


# ---- 定理簿记（精确有理指数） ----

def coupling_exponent(s: Fraction) -> Fraction:
    """λ ∼ N^{(1−s)/s}"""
    return (1 - s) / s


def lifespan_exponent_1d(s: Fraction) -> Fraction:
    """N^{5/2}/λ² 在 λ = N^{(1−s)/s} 下的 N 指数"""
    return Fraction(5, 2) - 2 * coupling_exponent(s)


def lifespan_exponent_2d(s: Fraction) -> Fraction:
    """N^{1}/λ² 在 λ = N^{(1−s)/s} 下的 N 指数"""
    return 1 - 2 * coupling_exponent(s)


def bookkeeping_identities(s_values: Iterable[Fraction]) -> List[Dict]:
    """
    逐个 s 核对指数恒等式

    Returns:
        每个 s 一条记录，含两个恒等式与两个阈值判断
    """
    rows = []
    for s in s_values:
        s = Fraction(s)
        if not 0 < s < 1:
            raise DomainError(f"s={s} 必须落在 (0,1)")
        e1 = lifespan_exponent_1d(s)
        e2 = lifespan_exponent_2d(s)
        rows.append({
            "s": s,
            "exponent_1d": e1,
            "identity_1d": e1 == (9 * s - 4) / (2 * s),
            "positive_1d_iff_s_gt_4_9": (e1 > 0) == (s > Fraction(4, 9)),
            "exponent_2d": e2,
            "identity_2d": e2 == (3 * s - 2) / s,
            "positive_2d_iff_s_gt_2_3": (e2 > 0) == (s > Fraction(2, 3)),
        })
    return rows
