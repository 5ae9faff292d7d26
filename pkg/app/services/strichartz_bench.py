"""
Strichartz 基准服务
生成频率局部化数据、线性演化、计算时间窗下的时空范数，
并与线性 / 双线性 Strichartz 估计中的常数比较
"""
import math
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from app.core.config import settings
from app.core.exceptions import DomainError
from app.core.torus_lattice import TorusLattice
from app.core.spectral_field import (
    SpectralField,
    SpaceTimeField,
    bump_window,
    lp_spacetime_norm,
    mass,
    padded_values,
    window_grid,
    xsb_norm,
)
from app.core.nls_solver import random_hs_field

SMOOTHING_SLACK = 0.01


def annulus_mask(l: TorusLattice, N: float) -> np.ndarray:
    """N/2 ≤ |k| ≤ 2N 且非 Nyquist 的位置"""
    k = l.k_norm()
    return (k >= N / 2) & (k <= 2 * N) & ~l.nyquist_mask()


def annulus_lattice(d: int, lam: float, N: float) -> TorusLattice:
    """能容纳环形 |k| ≤ 2N 的最小 2 的幂带限"""
    need = 2 * N * lam
    M = 4
    while M // 2 - 1 < need:
        M *= 2
    return TorusLattice(d=d, lam=lam, M=M)


def random_annulus_field(l: TorusLattice, N: float, seed: int, positive: bool = False) -> SpectralField:
    """
    单位 L² 范数、谱支撑在 N/2 ≤ |k| ≤ 2N 的随机场

    Args:
        l: 环面格点
        N: 二进尺度
        seed: 随机种子
        positive: 为 True 时所有系数取正实数（Littlewood-Paley 片段的正谱变体）
    """
    mask = annulus_mask(l, N)
    if not mask.any():
        raise DomainError(f"尺度 N={N} 的环形在 M={l.M}, λ={l.lam} 的带内为空")
    rng = np.random.default_rng(seed)
    magnitude = rng.uniform(0.5, 1.0, size=l.shape)
    phase = np.ones(l.shape) if positive else np.exp(2j * np.pi * rng.random(l.shape))
    field = SpectralField(l, np.where(mask, magnitude * phase, 0.0))
    return field * (1.0 / math.sqrt(mass(field)))


def adversarial_annulus_field(l: TorusLattice, N: float) -> SpectralField:
    """环形内系数等模、t = 0 时相位对齐的单位场"""
    mask = annulus_mask(l, N)
    if not mask.any():
        raise DomainError(f"尺度 N={N} 的环形在带内为空")
    field = SpectralField(l, mask.astype(np.complex128))
    return field * (1.0 / math.sqrt(mass(field)))


def _windowed_evolution(phi: SpectralField, frames: int) -> SpaceTimeField:
    t0, dt = window_grid(frames)
    times = t0 + dt * np.arange(frames)
    return SpaceTimeField.free_evolution(phi, t0, dt, frames, window=bump_window(times))


def bilinear_norm(phi1: SpectralField, phi2: SpectralField, frames: Optional[int] = None, batch: int = 16) -> float:
    """
    B = ‖η·U(t)φ₁ · η·U(t)φ₂‖_{L²_{t,x}}

    四次乘积在补零网格上精确求积，时间方向在 [−2, 2) 上用矩形公式。
    """
    phi1._check_same(phi2)
    frames = frames or settings.window_frames
    lattice = phi1.lattice
    u1 = _windowed_evolution(phi1, frames)
    u2 = _windowed_evolution(phi2, frames)
    size = lattice.padded_size(4)
    window = u1.window_values()
    total = 0.0
    for start in range(0, frames, batch):
        stop = min(start + batch, frames)
        w = window[start:stop].reshape((-1,) + (1,) * lattice.d)
        product = (w ** 2) * padded_values(lattice, u1.coeffs[start:stop], size) * padded_values(lattice, u2.coeffs[start:stop], size)
        total += float(np.sum(np.abs(product) ** 2))
    return math.sqrt(total * (lattice.lam / size) ** lattice.d * u1.dt)


def bilinear_constant(d: int, lam: float, N1: float, N2: float, part: str = "b", eps: Optional[float] = None) -> float:
    """
    双线性估计中的常数 C

    一维：N1 ≤ 1 时为 1，否则 (1/N1 + 1/λ)^{1/2}；
    二维 (a)：(λN2)^ε；二维 (b)：(1/λ + N2/N1)^{1/2}。
    """
    if d == 1:
        return 1.0 if N1 <= 1 else math.sqrt(1.0 / N1 + 1.0 / lam)
    if part == "a":
        eps = settings.epsilon_2d if eps is None else eps
        return (lam * N2) ** eps
    if part == "b":
        return math.sqrt(1.0 / lam + N2 / N1)
    raise DomainError(f"未知的二维常数分支: {part}")


@dataclass
class BilinearTrial:
    """一次双线性试验：两个频率分离的初值及其测量"""

    lattice: TorusLattice
    N1: float
    N2: float
    phi1: SpectralField
    phi2: SpectralField
    frames: int = 128
    part: str = "b"
    separated: bool = True

    def __post_init__(self):
        if self.separated and self.N1 < 4 * self.N2:
            raise DomainError(f"需要 N1 ≥ 4·N2，当前 N1={self.N1}, N2={self.N2}")
        for phi, scale in ((self.phi1, self.N1), (self.phi2, self.N2)):
            if phi.lattice != self.lattice:
                raise DomainError("初值与试验格点不一致")
            if np.any(phi.coeffs[~annulus_mask(self.lattice, scale)]):
                raise DomainError(f"初值支撑超出尺度 {scale} 的环形")

    @property
    def reference(self) -> float:
        return math.sqrt(mass(self.phi1) * mass(self.phi2))

    @property
    def constant(self) -> float:
        return bilinear_constant(self.lattice.d, self.lattice.lam, self.N1, self.N2, self.part)

    def measure(self) -> float:
        return bilinear_norm(self.phi1, self.phi2, self.frames)


def bilinear_ratio(trial: BilinearTrial) -> float:
    """B / (C(λ, N1)·‖φ₁‖‖φ₂‖)，φ 为零时返回 0"""
    reference = trial.reference
    if reference == 0:
        return 0.0
    return trial.measure() / (trial.constant * reference)


def measure_bilinear(
    d: int,
    lam: float,
    N1: float,
    N2: float,
    trials: Optional[int] = None,
    seed: int = 0,
    part: str = "b",
    frames: Optional[int] = None,
    separated: bool = True,
    executor: Optional[Executor] = None,
) -> Dict:
    """
    一个 (λ, N1, N2) 配置下 trials 个随机试验加一个对抗试验中的最大 B

    Returns:
        一行结果，列为 d, lambda, N1, N2, trials, B_max, reference, constant, ratio
    """
    trials = settings.bilinear_trials if trials is None else trials
    frames = frames or settings.window_frames
    lattice = annulus_lattice(d, lam, max(N1, N2))
    pairs: List[Tuple[SpectralField, SpectralField]] = [
        (random_annulus_field(lattice, N1, seed + 2 * i), random_annulus_field(lattice, N2, seed + 2 * i + 1))
        for i in range(trials)
    ]
    pairs.append((adversarial_annulus_field(lattice, N1), adversarial_annulus_field(lattice, N2)))
    built = [BilinearTrial(lattice, N1, N2, a, b, frames, part, separated) for a, b in pairs]
    values = list(executor.map(BilinearTrial.measure, built)) if executor else [t.measure() for t in built]
    best = int(np.argmax(values))
    constant = built[best].constant
    reference = built[best].reference
    row = {
        "d": d, "lambda": lam, "N1": N1, "N2": N2, "trials": len(built),
        "B_max": values[best], "reference": reference, "constant": constant,
        "ratio": values[best] / (constant * reference),
    }
    logger.info(f"双线性 d={d}, λ={lam}, N1={N1}, N2={N2}: B_max={row['B_max']:.4g}, 比值={row['ratio']:.4g}")
    return row


def comparable_frequency_control(
    lam: float, N1s: Sequence[float], trials: Optional[int] = None, seed: int = 0, frames: Optional[int] = None
) -> List[Dict]:
    """一维 N1 = N2 的对照：比值应随 N1 增长"""
    return [measure_bilinear(1, lam, n, n, trials, seed, frames=frames, separated=False) for n in N1s]


def valid_exponent(d: int, p: float) -> bool:
    """一维 p ∈ {2, 4} 或 p ≥ 6；二维 p = 2 或 p ≥ 4"""
    if d == 1:
        return p in (2, 4) or p >= 6
    return p == 2 or p >= 4


def default_exponents(d: int, p: float) -> Tuple[float, float]:
    """
    估计所需的 (s, b)

    p = 2 为 (0, 0)；一维 p = 4 为 (0, 3/8+)；一维 p ≥ 6 为 (1/2 − 3/p +, 1/2+)；
    二维 p ≥ 4 为 (1 − 4/p +, 1/2+)。
    """
    if not valid_exponent(d, p):
        raise DomainError(f"p={p} 不在 d={d} 的估计适用范围内")
    if p == 2:
        return 0.0, 0.0
    if d == 1 and p == 4:
        return 0.0, 0.375 + SMOOTHING_SLACK
    alpha = 0.5 - 3.0 / p if d == 1 else 1.0 - 4.0 / p
    return alpha + SMOOTHING_SLACK, 0.5 + SMOOTHING_SLACK


def linear_strichartz_ratio(
    l: TorusLattice,
    p: float,
    s_weight: Optional[float] = None,
    b: Optional[float] = None,
    trials: int = 100,
    seed: int = 0,
    frames: Optional[int] = None,
) -> float:
    """
    max over trials 的 ‖η·U(t)φ‖_{L^p_{t,x}} / ‖η·U(t)φ‖_{X^{s,b}}

    Args:
        l: 环面格点
        p: 指数（须在估计适用范围内）
        s_weight: 空间权重，缺省按估计取值
        b: 时间权重，缺省按估计取值
        trials: 随机初值个数
    """
    default_s, default_b = default_exponents(l.d, p)
    s_weight = default_s if s_weight is None else s_weight
    b = default_b if b is None else b
    frames = frames or settings.window_frames
    worst = 0.0
    for trial in range(trials):
        phi = random_hs_field(l, 0.0, seed + trial)
        u = _windowed_evolution(phi, frames)
        worst = max(worst, lp_spacetime_norm(u, p) / xsb_norm(u, s_weight, b))
    logger.info(f"线性 Strichartz d={l.d}, λ={l.lam}, p={p}: 最大比值={worst:.4g}")
    return worst
