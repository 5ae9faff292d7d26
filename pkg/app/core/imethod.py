"""
I-方法模块
乘子 m(k)、光滑算子 I、第一修正能量 E¹(u) = E(Iu) 以及光滑不等式的经验检验
"""
from typing import Dict, List, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from app.core.exceptions import DomainError
from app.core.torus_lattice import TorusLattice
from app.core.spectral_field import (
    SpectralField,
    FrequencyMultiplier,
    apply_multiplier,
    sobolev_norm,
)
from app.core.nls_solver import energy, random_hs_field


class IMethodParams(BaseModel):
    """I-方法参数：阈值频率 N 与正则性 s"""

    N: float = Field(ge=1)
    s: float = Field(gt=0, le=1)


def m_values(p: IMethodParams, k_abs: np.ndarray) -> np.ndarray:
    """
    m(k)：|k| ≤ N 时为 1，|k| > N 时为 (|k|/N)^{s−1}

    Args:
        p: I-方法参数
        k_abs: 频率模长（物理单位）
    """
    k_abs = np.asarray(k_abs, dtype=np.float64)
    ratio = np.maximum(k_abs / p.N, 1.0)
    return ratio ** (p.s - 1.0)


def m_squared_from_index(p: IMethodParams, index_sq: np.ndarray, lam: float) -> np.ndarray:
    """由整数 |n|² 求 m(|n|/λ)²"""
    k_sq = np.asarray(index_sq, dtype=np.float64) / lam ** 2
    ratio = np.maximum(k_sq / p.N ** 2, 1.0)
    return ratio ** (p.s - 1.0)


def m_symbol(p: IMethodParams, l: TorusLattice) -> FrequencyMultiplier:
    """I 的符号作为格点乘子"""
    return FrequencyMultiplier(l, m_values(p, l.k_norm()), name=f"m(N={p.N}, s={p.s})")


def apply_I(p: IMethodParams, f: SpectralField) -> SpectralField:
    """Iu 的系数为 m(k)û(k)"""
    return apply_multiplier(m_symbol(p, f.lattice), f)


def first_energy(p: IMethodParams, f: SpectralField) -> float:
    """E¹(f) = E(If)"""
    return energy(apply_I(p, f))


def smoothing_check(p: IMethodParams, f: SpectralField, s0: float) -> Tuple[float, float]:
    """
    光滑性夹逼 ‖u‖_{s0} ≲ ‖Iu‖_{s0+1−s} ≲ N^{1−s}‖u‖_{s0} 的两个比值

    Returns:
        (‖If‖_{H^{s0+1−s}}/‖f‖_{H^{s0}}, N^{1−s}‖f‖_{H^{s0}}/‖If‖_{H^{s0+1−s}})
    """
    if f.is_zero():
        raise DomainError("零场无法计算光滑比值")
    lifted = sobolev_norm(apply_I(p, f), s0 + 1.0 - p.s)
    base = sobolev_norm(f, s0)
    ratio = lifted / base
    return ratio, p.N ** (1.0 - p.s) / ratio


def sandwich_constants(
    lattice: TorusLattice,
    params: Sequence[IMethodParams],
    s0: float,
    trials: int = 200,
    seed: int = 0,
) -> List[Dict]:
    """
    对每组参数在随机场上测量夹逼常数

    c₀ = min ‖If‖_{H^{s0+1−s}}/‖f‖_{H^{s0}}，C₀ = max 同一比值 / N^{1−s}
    """
    rows = []
    for p in params:
        lower, upper = np.inf, 0.0
        for trial in range(trials):
            field = random_hs_field(lattice, p.s, seed + trial)
            ratio, _ = smoothing_check(p, field, s0)
            lower = min(lower, ratio)
            upper = max(upper, ratio / p.N ** (1.0 - p.s))
        rows.append({"N": p.N, "s": p.s, "c0": lower, "C0": upper, "trials": trials})
        logger.info(f"夹逼常数 N={p.N}, s={p.s}: c0={lower:.4g}, C0={upper:.4g}")
    return rows
