"""
修正能量模块
第二修正能量 E²（符号 M6）、增量符号 M10、微分律与增量恒等式的数值核验、
二维 E¹ 增量的 Tr₁/Tr₂ 分解以及 M6 有界性探测

一维五次方程的时间导数（带内 Galerkin 轨道上精确成立）：
    dE²/dt = Re[−iΛ₁₀(M10)] + Re[i(2π)²/6 · Λ₆(α_m·1_excluded)]
其中 M10 = (1/6)Σ_j (−1)^{j+1} X_j^4(M6)，α_m = Σ(−1)^{j+1} m_j²|k_j|²；
第二项仅在被排除的共振元组上非零。
"""
from concurrent.futures import Executor
from dataclasses import dataclass, field
from itertools import permutations
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import integrate
from loguru import logger

from app.core.config import settings
from app.core.exceptions import BudgetExceededError, DomainError
from app.core.torus_lattice import TorusLattice
from app.core.spectral_field import (
    TWO_PI,
    SpectralField,
    SpaceTimeField,
    inner_product,
    power_nonlinearity,
)
from app.core.imethod import IMethodParams, apply_I, first_energy, m_squared_from_index, m_values
from app.core.nls_solver import nonlinearity_half_power
from app.core.multilinear import (
    MultilinearSymbol,
    ResonanceLog,
    SlotSpectrum,
    alternating_slots,
    combine_symbols,
    dispersion_weighted,
    elongate,
    gamma_n_enumerate,
    kinetic_symbol,
    lambda_n_estimate,
    multilinear_form,
)
from app.utils.chunking import product_size

_SIGNS = np.array([1, -1, 1, -1, 1, -1], dtype=np.int64)
NUMERATOR_RTOL = 1e-12


# ---- M6 ----

def _m6_parts(p: IMethodParams, lattice: TorusLattice, ks: np.ndarray):
    nsq = np.sum(ks.astype(np.int64) ** 2, axis=-1)
    denominator = nsq @ _SIGNS
    m_sq = m_squared_from_index(p, nsq, lattice.lam)
    terms = m_sq * nsq
    numerator = terms @ _SIGNS.astype(np.float64)
    numerator_zero = np.abs(numerator) <= NUMERATOR_RTOL * np.sum(np.abs(terms), axis=1)
    return numerator, denominator, numerator_zero, m_sq


def m6_values(
    p: IMethodParams, lattice: TorusLattice, ks: np.ndarray, log: Optional[ResonanceLog] = None
) -> np.ndarray:
    """
    向量化的 M6，被排除的共振元组返回 NaN

    分母 Σ(−1)^{j+1}|n_j|² 用整数精确求值；分母为零且分子为零时取 Π m_j。

    Args:
        p: I-方法参数
        lattice: 环面格点（只用到 λ）
        ks: 形状 (B, 6, d) 的整数指标
        log: 可选的共振日志
    """
    numerator, denominator, numerator_zero, m_sq = _m6_parts(p, lattice, ks)
    out = np.full(len(ks), np.nan)
    regular = denominator != 0
    out[regular] = numerator[regular] / denominator[regular]
    fallback = ~regular & numerator_zero
    out[fallback] = np.prod(np.sqrt(m_sq[fallback]), axis=1)
    excluded = ~regular & ~numerator_zero
    if log is not None:
        log.record(ks[fallback], numerator[fallback], denominator[fallback], "numerator-zero")
        log.record(ks[excluded], numerator[excluded], denominator[excluded], "numerator-nonzero")
    return out


def m6_eval(p: IMethodParams, lattice: TorusLattice, indices: Sequence, log: Optional[ResonanceLog] = None) -> Optional[float]:
    """单个 Γ₆ 元组上的 M6，被排除时返回 None"""
    ks = np.asarray(indices, dtype=np.int64).reshape(1, 6, lattice.d)
    if np.any(ks[0].sum(axis=0)):
        raise DomainError(f"元组 {np.asarray(indices).tolist()} 不在 Γ₆ 上")
    value = float(m6_values(p, lattice, ks, log)[0])
    return None if np.isnan(value) else value


def m6_symbol(p: IMethodParams, lattice: TorusLattice, log: Optional[ResonanceLog] = None) -> MultilinearSymbol:
    return MultilinearSymbol(6, lambda ks: m6_values(p, lattice, ks, log), lattice, "M6")


# ---- E² ----

@dataclass(frozen=True)
class EnergyEstimate:
    """E² 及其两项"""

    value: float
    kinetic: float
    sextic: float
    stderr: float
    sampled: bool
    excluded: int


def _require_1d(lattice: TorusLattice):
    if lattice.d != 1:
        raise DomainError("第二修正能量只对一维五次方程定义")


def _choose_mode(mode: str, f: SpectralField, arity: int) -> str:
    if mode != "auto":
        return mode
    support = int(np.count_nonzero(f.coeffs))
    count = product_size([support] * (arity - 1))
    if count <= settings.enumeration_budget:
        return "exhaustive"
    logger.warning(f"Γ_{arity} 穷举需要 {count} 个元组，改用采样估计")
    return "sampled"


def second_energy_estimate(
    p: IMethodParams,
    f: SpectralField,
    mode: str = "auto",
    samples: Optional[int] = None,
    seed: int = 0,
    log: Optional[ResonanceLog] = None,
    executor: Optional[Executor] = None,
) -> EnergyEstimate:
    """
    E²(f) = −½Λ₂((2π)²m₁k₁·m₂k₂) + (1/6)Λ₆(M6)

    Args:
        p: I-方法参数
        f: 一维谱场
        mode: "auto"、"exhaustive" 或 "sampled"
        samples: 采样个数
        seed: 采样种子
        log: 共振日志
        executor: 穷举时的线程池

    Returns:
        EnergyEstimate
    """
    _require_1d(f.lattice)
    if f.is_zero():
        return EnergyEstimate(0.0, 0.0, 0.0, 0.0, False, 0)
    kinetic = -0.5 * lambda_n_estimate(kinetic_symbol(p, f.lattice), f).value.real
    chosen = _choose_mode(mode, f, 6)
    est = lambda_n_estimate(m6_symbol(p, f.lattice, log), f, mode=chosen, samples=samples,
                            seed=seed, executor=executor,
                            stratify_threshold=p.N * f.lattice.lam if chosen == "sampled" else None)
    sextic = est.value.real / 6.0
    return EnergyEstimate(kinetic + sextic, kinetic, sextic, est.stderr / 6.0, est.sampled, est.excluded)


def second_energy(p: IMethodParams, f: SpectralField, **kwargs) -> float:
    return second_energy_estimate(p, f, **kwargs).value


def energy_gap(p: IMethodParams, f: SpectralField, **kwargs) -> float:
    """E²(f) − E¹(f) = (1/6)Λ₆(M6 − Πm)"""
    return second_energy(p, f, **kwargs) - first_energy(p, f)


def coercivity_gap(p: IMethodParams, f: SpectralField, **kwargs) -> float:
    """‖∇If‖² − 2E²(f)，应不超过 C/N"""
    est = second_energy_estimate(p, f, **kwargs)
    return 2.0 * est.kinetic - 2.0 * est.value


# ---- M10 ----

_ODD = (0, 2, 4, 6, 8)
_EVEN = (1, 3, 5, 7, 9)


def _slot_permutations() -> np.ndarray:
    perms = []
    for odd in permutations(_ODD):
        for even in permutations(_EVEN):
            order = np.empty(10, dtype=np.int64)
            order[list(_ODD)] = odd
            order[list(_EVEN)] = even
            perms.append(order)
    return np.stack(perms)


def m10_symbol(
    p: IMethodParams,
    lattice: TorusLattice,
    log: Optional[ResonanceLog] = None,
    band_limited: bool = True,
    symmetrize: bool = False,
) -> MultilinearSymbol:
    """
    M10 = (1/6) Σ_{j=1}^{6} (−1)^{j+1} X_j^4(M6)

    symmetrize=True 时对奇、偶位置的全部 5!·5! 个置换取平均，
    与代表元给出相同的 Λ₁₀。被排除的 M6 项按 0 计入。

    Args:
        p: I-方法参数
        lattice: 一维格点
        log: 共振日志
        band_limited: 合并指标出带时该项为 0（Galerkin 轨道上的增量律）
        symmetrize: 是否显式对置换求平均
    """
    _require_1d(lattice)
    m6 = m6_symbol(p, lattice, log)
    terms = [((-1) ** (j + 1) / 6.0, elongate(m6, j, 4, band_limited=band_limited)) for j in range(1, 7)]
    base = combine_symbols(terms, name="M10")
    if not symmetrize:
        return base

    perms = _slot_permutations()

    def evaluate(ks):
        total = np.zeros(len(ks))
        for start in range(0, len(perms), 720):
            block = perms[start:start + 720]
            stacked = ks[:, block].reshape(-1, 10, ks.shape[-1])
            total += base(stacked).reshape(len(ks), len(block)).sum(axis=1)
        return total / len(perms)
    return MultilinearSymbol(10, evaluate, lattice, "M10sym")


def resonant_residual_symbol(p: IMethodParams, lattice: TorusLattice) -> MultilinearSymbol:
    """α_m·1_excluded：被排除元组上 λ^{-2}Σ(−1)^{j+1}m_j²|n_j|²，其余为 0"""
    def evaluate(ks):
        numerator, denominator, numerator_zero, _ = _m6_parts(p, lattice, ks)
        excluded = (denominator == 0) & ~numerator_zero
        return np.where(excluded, numerator / lattice.lam ** 2, 0.0)
    return MultilinearSymbol(6, evaluate, lattice, "resonant")


# ---- 微分律 ----

def _replaced_slots(base: List[SlotSpectrum], j: int, source: SpectralField) -> List[SlotSpectrum]:
    """第 j 个槽位（从 0 计）换成 source（偶数位置 j 对应公式中的奇槽位）"""
    slots = list(base)
    slots[j] = SlotSpectrum.from_field(source, conjugate=(j % 2 == 1))
    return slots


def nonlinear_term(Mn: MultilinearSymbol, f: SpectralField, **kwargs) -> complex:
    """
    Σ_j (−1)^j Λ_n(M_n; 槽位 j ← P(|f|^{4/d}f) 或其共轭)

    与 Λ_{n+l}(Σ_j (−1)^j X_j^l(M_n)) 在带内截断的延长下逐项相等。
    """
    nonlinear = power_nonlinearity(f, nonlinearity_half_power(f.lattice.d))
    base = alternating_slots(f, Mn.arity)
    total = 0j
    for j in range(Mn.arity):
        sign = -1.0 if j % 2 == 0 else 1.0
        total += sign * multilinear_form(Mn, _replaced_slots(base, j, nonlinear), **kwargs).value
    return total


def elongated_symbol(Mn: MultilinearSymbol) -> MultilinearSymbol:
    """Σ_j (−1)^j X_j^l(M_n)，l = 4/d，合并指标限制在带内"""
    l = 2 * nonlinearity_half_power(Mn.lattice.d)
    return combine_symbols(
        [((-1.0) ** j, elongate(Mn, j, l, band_limited=True)) for j in range(1, Mn.arity + 1)],
        name=f"elong({Mn.name})",
    )


def derivative_rhs(Mn: MultilinearSymbol, f: SpectralField, nonlinear: bool = True,
                   route: str = "collapsed", **kwargs) -> complex:
    """
    微分律右端 iΛ_n(M_n Σ(−1)^j(2π|k_j|)²) + iΛ_{n+l}(Σ(−1)^j X_j^l(M_n))

    Args:
        route: "collapsed" 用非线性项替换槽位，"elongated" 直接在 Γ_{n+l} 上求和
    """
    value = 1j * lambda_n_estimate(dispersion_weighted(Mn), f, **kwargs).value
    if not nonlinear:
        return value
    if route == "collapsed":
        return value + 1j * nonlinear_term(Mn, f, **kwargs)
    if route == "elongated":
        return value + 1j * lambda_n_estimate(elongated_symbol(Mn), f, **kwargs).value
    raise DomainError(f"未知路线: {route}")


@dataclass
class DifferentiationReport:
    """微分律核验结果（内部帧）"""

    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    scale: float
    max_relative_error: float


def _finite_difference(values: np.ndarray, h: float) -> np.ndarray:
    """四阶中心差分，返回内部帧 2..T−3 上的导数"""
    return (-values[4:] + 8 * values[3:-1] - 8 * values[1:-3] + values[:-4]) / (12.0 * h)


def differentiation_check(
    Mn: MultilinearSymbol,
    trajectory: SpaceTimeField,
    nonlinear: bool = True,
    route: str = "collapsed",
    **kwargs,
) -> DifferentiationReport:
    """
    比较 d/dt Λ_n(M_n; u(t)) 的有限差分与微分律右端

    Args:
        Mn: 符号
        trajectory: 求解器轨道（逐帧等距）
        nonlinear: 轨道是否含非线性项，线性流时去掉 Λ_{n+l} 项
        route: 右端非线性项的计算路线

    Returns:
        DifferentiationReport，相对误差以 max(max|RHS|, max|Λ|·(2πk_max)²) 为尺度
    """
    if trajectory.n_frames < 5:
        raise DomainError("微分律核验至少需要 5 帧")
    if Mn.lattice != trajectory.lattice:
        raise DomainError("符号与轨道的格点不一致")
    frames = trajectory.frames
    values = np.array([lambda_n_estimate(Mn, f, **kwargs).value for f in frames])
    lhs = _finite_difference(values, trajectory.dt)
    rhs = np.array([derivative_rhs(Mn, f, nonlinear, route, **kwargs) for f in frames[2:-2]])
    k_max = TWO_PI * float(np.max(trajectory.lattice.k_norm()))
    scale = max(float(np.max(np.abs(rhs))), float(np.max(np.abs(values))) * k_max ** 2)
    error = float(np.max(np.abs(lhs - rhs))) / scale if scale > 0 else 0.0
    logger.info(f"微分律核验 {Mn.name}: 帧数={len(lhs)}, 最大相对误差={error:.3e}")
    return DifferentiationReport(trajectory.times[2:-2], lhs, rhs, scale, error)


# ---- 增量恒等式 ----

@dataclass
class IncrementReport:
    """E²(T+δ) − E²(T) 与时间积分的比较"""

    T: float
    delta: float
    lhs: float
    rhs: float
    resonant: float
    stderr: float
    mode: str
    frames: int
    absolute: float = field(init=False)
    relative: float = field(init=False)

    def __post_init__(self):
        self.absolute = abs(self.lhs - self.rhs)
        scale = max(abs(self.lhs), abs(self.rhs))
        self.relative = self.absolute / scale if scale > 0 else 0.0


def increment_integrand(
    p: IMethodParams,
    f: SpectralField,
    mode: str = "collapsed",
    log: Optional[ResonanceLog] = None,
    samples: Optional[int] = None,
    seed: int = 0,
    executor: Optional[Executor] = None,
) -> Dict:
    """
    dE²/dt 在单帧上的取值

    Args:
        mode: "collapsed"（Γ₆ 上的精确折叠形式）、"direct"（Γ₁₀ 穷举）、"sampled"（Γ₁₀ 采样）

    Returns:
        {"value", "resonant", "stderr"}
    """
    _require_1d(f.lattice)
    lattice = f.lattice
    resonant = (TWO_PI ** 2 / 6.0) * (
        1j * lambda_n_estimate(resonant_residual_symbol(p, lattice), f, executor=executor).value
    ).real
    if mode == "collapsed":
        bulk = (1j / 6.0) * nonlinear_term(m6_symbol(p, lattice, log), f, executor=executor)
        return {"value": bulk.real + resonant, "resonant": resonant, "stderr": 0.0}
    symbol = m10_symbol(p, lattice, log)
    if mode == "direct":
        est = lambda_n_estimate(symbol, f, mode="exhaustive", executor=executor)
    elif mode == "sampled":
        est = lambda_n_estimate(symbol, f, mode="sampled", samples=samples, seed=seed,
                                stratify_threshold=p.N * lattice.lam)
    else:
        raise DomainError(f"未知增量模式: {mode}")
    return {"value": (-1j * est.value).real + resonant, "resonant": resonant, "stderr": est.stderr}


def _time_integral(values: np.ndarray, times: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    if len(values) == 2:
        return float(integrate.trapezoid(values, x=times))
    return float(integrate.simpson(values, x=times))


def increment_check(
    p: IMethodParams,
    trajectory: SpaceTimeField,
    T: float,
    delta: float,
    mode: str = "collapsed",
    samples: Optional[int] = None,
    seed: int = 0,
    log: Optional[ResonanceLog] = None,
    executor: Optional[Executor] = None,
) -> IncrementReport:
    """
    核验 E²(u(T+δ)) − E²(u(T)) = ∫_T^{T+δ} dE²/dt

    右端对 [T, T+δ] 内全部帧用 Simpson 公式求积。采样模式下标准误差按
    帧间独立近似为 Δt·(Σσ²)^{1/2}。

    Args:
        p: I-方法参数
        trajectory: 一维 Galerkin 轨道
        T: 起始时刻（须在帧网格上）
        delta: 区间长度 δ ≥ 0
        mode: 被积函数的计算方式

    Returns:
        IncrementReport
    """
    _require_1d(trajectory.lattice)
    if delta < 0:
        raise DomainError("δ 必须非负")
    start = trajectory.frame_at(T)
    stop = trajectory.frame_at(T + delta)
    if stop == start:
        return IncrementReport(T, delta, 0.0, 0.0, 0.0, 0.0, mode, 1)

    kwargs = {"log": log, "executor": executor}
    lhs = second_energy(p, trajectory.frame(stop), **kwargs) - second_energy(p, trajectory.frame(start), **kwargs)
    rows = [
        increment_integrand(p, trajectory.frame(i), mode, log, samples, seed + i, executor)
        for i in range(start, stop + 1)
    ]
    times = trajectory.times[start:stop + 1]
    rhs = _time_integral(np.array([r["value"] for r in rows]), times)
    resonant = _time_integral(np.array([r["resonant"] for r in rows]), times)
    stderr = trajectory.dt * float(np.sqrt(sum(r["stderr"] ** 2 for r in rows)))
    report = IncrementReport(T, delta, lhs, rhs, resonant, stderr, mode, len(rows))
    logger.info(f"增量恒等式 T={T}, δ={delta}: 左={lhs:.6e}, 右={rhs:.6e}, 相对差={report.relative:.3e}")
    return report


# ---- 二维 Tr 分解 ----

def tr1_symbol(p: IMethodParams, lattice: TorusLattice) -> MultilinearSymbol:
    """σ₄ = 1 − m(k₂+k₃+k₄)/(m₂m₃m₄)"""
    def evaluate(ks):
        k = ks.astype(np.float64) / lattice.lam
        m = m_values(p, np.sqrt(np.sum(k ** 2, axis=-1)))
        merged = m_values(p, np.sqrt(np.sum(k[:, 1:].sum(axis=1) ** 2, axis=-1)))
        return 1.0 - merged / np.prod(m[:, 1:], axis=1)
    return MultilinearSymbol(4, evaluate, lattice, "sigma4")


def tr2_symbol(p: IMethodParams, lattice: TorusLattice) -> MultilinearSymbol:
    """m₁₂₃(m₄₅₆ − m₄m₅m₆)·1[k₁+k₂+k₃ 在带内]"""
    def evaluate(ks):
        k = ks.astype(np.float64) / lattice.lam
        m = m_values(p, np.sqrt(np.sum(k ** 2, axis=-1)))
        first = ks[:, :3].sum(axis=1)
        m123 = m_values(p, np.sqrt(np.sum((first / lattice.lam) ** 2, axis=-1)))
        m456 = m_values(p, np.sqrt(np.sum((k[:, 3:].sum(axis=1)) ** 2, axis=-1)))
        inside = lattice.in_band(first, allow_nyquist=False)
        return np.where(inside, m123 * (m456 - np.prod(m[:, 3:], axis=1)), 0.0)
    return MultilinearSymbol(6, evaluate, lattice, "tr2")


def _laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.lattice, -TWO_PI ** 2 * f.lattice.k_norm_sq() * f.coeffs)


def tr_integrands(
    p: IMethodParams,
    u: SpectralField,
    method: str = "multilinear",
    tr2_mode: str = "collapsed",
    samples: Optional[int] = None,
    seed: int = 0,
    executor: Optional[Executor] = None,
) -> Dict:
    """
    单帧上 dE¹/dt 的两部分

    Tr₁ 被积函数 Re[−iΛ₄(σ₄; Δ\\overline{Iu}, Iu, \\overline{Iu}, Iu)]，
    Tr₂ 被积函数 Re[−iΛ₆(m₁₂₃(m₄₅₆ − m₄m₅m₆); ū, u, ū, u, ū, u)]。

    Args:
        method: "multilinear" 在超平面上求和，"spectral" 用补零 FFT 乘积
        tr2_mode: multilinear 方法下 Tr₂ 的求法："collapsed"（Γ₄）或 "sampled"（Γ₆）
    """
    lattice = u.lattice
    v = apply_I(p, u)
    if method == "spectral":
        nonlinear = apply_I(p, power_nonlinearity(u, 1))
        cubic = power_nonlinearity(v, 1)
        tr1 = (-1j * inner_product(cubic - nonlinear, _laplacian(v))).real
        tr2 = (1j * inner_product(cubic, nonlinear)).real
        return {"tr1": tr1, "tr2": tr2, "stderr": 0.0}
    if method != "multilinear":
        raise DomainError(f"未知 Tr 计算方法: {method}")

    plain = SlotSpectrum.from_field(v)
    conj = SlotSpectrum.from_field(v, conjugate=True)
    lap_conj = SlotSpectrum.from_field(_laplacian(v), conjugate=True)
    est1 = multilinear_form(tr1_symbol(p, lattice), [lap_conj, plain, conj, plain], executor=executor)
    tr1 = (-1j * est1.value).real

    if tr2_mode == "collapsed":
        nonlinear = apply_I(p, power_nonlinearity(u, 1))
        slots = [SlotSpectrum.from_field(nonlinear, conjugate=True), plain, conj, plain]
        est2 = multilinear_form(MultilinearSymbol(4, lambda ks: np.ones(len(ks)), lattice, "one4"),
                                slots, executor=executor)
        return {"tr1": tr1, "tr2": (1j * est2.value).real, "stderr": 0.0}
    if tr2_mode != "sampled":
        raise DomainError(f"未知 Tr₂ 模式: {tr2_mode}")
    u_plain = SlotSpectrum.from_field(u)
    u_conj = SlotSpectrum.from_field(u, conjugate=True)
    est2 = multilinear_form(tr2_symbol(p, lattice), [u_conj, u_plain] * 3, mode="sampled",
                            samples=samples, seed=seed)
    return {"tr1": tr1, "tr2": (-1j * est2.value).real, "stderr": est2.stderr}


@dataclass
class TrReport:
    """E¹(u(t)) − E¹(u(0)) 与 Tr₁ + Tr₂ 的比较"""

    t: float
    tr1: float
    tr2: float
    direct: float
    stderr: float
    method: str
    absolute: float = field(init=False)
    relative: float = field(init=False)

    def __post_init__(self):
        total = self.tr1 + self.tr2
        self.absolute = abs(total - self.direct)
        scale = max(abs(total), abs(self.direct))
        self.relative = self.absolute / scale if scale > 0 else 0.0


def tr_decomposition_2d(
    p: IMethodParams,
    trajectory: SpaceTimeField,
    t: float,
    method: str = "multilinear",
    tr2_mode: str = "collapsed",
    samples: Optional[int] = None,
    seed: int = 0,
    executor: Optional[Executor] = None,
) -> TrReport:
    """
    二维三次方程上 E¹ 的增量分解 E¹(u(t)) − E¹(u(0)) = Tr₁ + Tr₂

    Args:
        p: I-方法参数
        trajectory: 二维 Galerkin 轨道（t0 = 0）
        t: 终止时刻（须在帧网格上）
        method: 被积函数的计算方式

    Returns:
        TrReport
    """
    if trajectory.lattice.d != 2:
        raise DomainError("Tr 分解只用于二维轨道")
    stop = trajectory.frame_at(t)
    start = trajectory.frame_at(trajectory.t0)
    direct = first_energy(p, trajectory.frame(stop)) - first_energy(p, trajectory.frame(start))
    if stop == start:
        return TrReport(t, 0.0, 0.0, direct, 0.0, method)
    rows = [
        tr_integrands(p, trajectory.frame(i), method, tr2_mode, samples, seed + i, executor)
        for i in range(start, stop + 1)
    ]
    times = trajectory.times[start:stop + 1]
    tr1 = _time_integral(np.array([r["tr1"] for r in rows]), times)
    tr2 = _time_integral(np.array([r["tr2"] for r in rows]), times)
    stderr = trajectory.dt * float(np.sqrt(sum(r["stderr"] ** 2 for r in rows)))
    report = TrReport(t, tr1, tr2, direct, stderr, method)
    logger.info(f"Tr 分解 t={t}: Tr1={tr1:.6e}, Tr2={tr2:.6e}, 直接差={direct:.6e}, 相对差={report.relative:.3e}")
    return report


# ---- M6 有界性探测 ----

def m6_bound_probe(
    p: IMethodParams,
    lattice: TorusLattice,
    random_tuples: int = 1_000_000,
    seed: int = 0,
    spread: float = 8.0,
    log: Optional[ResonanceLog] = None,
) -> Dict:
    """
    在小格点的全部 Γ₆ 元组与随机高频元组上测量 max|M6|

    随机元组的前五个指标模长取自 [Nλ, spread·Nλ]，符号随机，第六个由 Σ = 0 决定。

    Returns:
        含穷举与随机部分最大值、排除数与回退数的记录
    """
    if lattice.d != 1:
        raise DomainError("M6 探测只用于一维格点")
    local_log = log or ResonanceLog(limit=0)
    exhaustive_max, tuples = 0.0, 0
    try:
        for ks in gamma_n_enumerate(lattice, 6):
            values = m6_values(p, lattice, ks, local_log)
            finite = values[~np.isnan(values)]
            tuples += len(ks)
            if len(finite):
                exhaustive_max = max(exhaustive_max, float(np.max(np.abs(finite))))
    except BudgetExceededError as e:
        logger.warning(f"M6 探测跳过穷举部分: {e}")

    rng = np.random.default_rng(seed)
    low = int(np.ceil(p.N * lattice.lam))
    high = max(low + 1, int(spread * p.N * lattice.lam))
    random_max = 0.0
    for start in range(0, random_tuples, settings.enumeration_chunk):
        size = min(settings.enumeration_chunk, random_tuples - start)
        first = rng.integers(low, high + 1, size=(size, 5)) * rng.choice([-1, 1], size=(size, 5))
        ks = np.concatenate([first, -first.sum(axis=1, keepdims=True)], axis=1)[:, :, None]
        values = m6_values(p, lattice, ks, local_log)
        finite = values[~np.isnan(values)]
        if len(finite):
            random_max = max(random_max, float(np.max(np.abs(finite))))

    row = {
        "lam": lattice.lam, "M": lattice.M, "N": p.N, "s": p.s,
        "exhaustive_tuples": tuples, "exhaustive_max": exhaustive_max,
        "random_tuples": random_tuples, "random_max": random_max,
        "bound": max(exhaustive_max, random_max),
        "excluded": local_log.excluded, "fallback": local_log.fallback,
    }
    logger.info(f"M6 探测 λ={lattice.lam}, N={p.N}, s={p.s}: max|M6|={row['bound']:.4g}")
    return row
