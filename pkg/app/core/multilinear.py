"""
多线性形式模块
超平面 Γ_n = {k₁+…+k_n = 0} 上的枚举与采样、多线性形式 Λ_n、延长运算 X_j^l
以及共振日志

Λ_n(M; f₁,…,f_n) = λ^{-d(n-1)} Σ_{Γ_n} M(k₁,…,k_n) Π f̂_j(k_j)，
λ_n 取交替槽 f, f̄, f, f̄, …（f̄ 的谱为 conj(f̂(−k))）。
符号在整数指标上求值（形状 (B, n, d)），返回 NaN 表示该元组被排除。
"""
import threading
from concurrent.futures import Executor
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from app.core.config import settings
from app.core.exceptions import BudgetExceededError, DomainError
from app.core.torus_lattice import TorusLattice
from app.core.spectral_field import TWO_PI, SpectralField
from app.core.imethod import IMethodParams, m_values
from app.utils.chunking import block_ranges, mixed_radix_digits, product_size

Evaluator = Callable[[np.ndarray], np.ndarray]


class MultilinearSymbol:
    """n 个频率变量的实值符号，限制在 Γ_n 上"""

    def __init__(self, arity: int, evaluator: Evaluator, lattice: TorusLattice, name: str = ""):
        if arity < 2 or arity % 2:
            raise DomainError(f"符号阶数 {arity} 必须为 ≥ 2 的偶数")
        self.arity = arity
        self.evaluator = evaluator
        self.lattice = lattice
        self.name = name or f"M{arity}"

    def __call__(self, ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, dtype=np.int64)
        if ks.ndim != 3 or ks.shape[1] != self.arity:
            raise DomainError(f"{self.name} 需要形状 (B, {self.arity}, d) 的指标，收到 {ks.shape}")
        return np.asarray(self.evaluator(ks), dtype=np.float64)

    def value_at(self, indices: Sequence) -> float:
        """单个元组上的取值（1D 可直接给整数）"""
        ks = np.asarray(indices, dtype=np.int64).reshape(1, self.arity, self.lattice.d)
        return float(self(ks)[0])

    def __repr__(self) -> str:
        return f"MultilinearSymbol({self.name}, arity={self.arity})"


class ResonanceLog:
    """
    记录 M6 分母为零的 Γ₆ 元组（线程安全）

    同一元组只记一次；计数是不同元组的个数。
    超过 limit 时只保留字典序最小的 limit 个元组，结果与记录顺序无关。
    """

    COLUMNS = ["n1", "n2", "n3", "n4", "n5", "n6", "numerator_int", "denominator_int", "tag"]
    TAGS = ("numerator-zero", "numerator-nonzero")

    def __init__(self, limit: Optional[int] = None):
        self.limit = settings.resonance_log_limit if limit is None else limit
        self._lock = threading.Lock()
        self._seen = {tag: set() for tag in self.TAGS}
        self._rows: Dict[Tuple[tuple, str], list] = {}

    def record(self, ks: np.ndarray, numerators: np.ndarray, denominators: np.ndarray, tag: str):
        if len(ks) == 0:
            return
        keys = [tuple(row) for row in np.asarray(ks, dtype=np.int64).reshape(len(ks), -1).tolist()]
        with self._lock:
            seen = self._seen[tag]
            for key, tup, num, den in zip(keys, ks, numerators, denominators):
                if key in seen:
                    continue
                seen.add(key)
                if self.limit > 0:
                    cells = [int(n[0]) if len(n) == 1 else ",".join(str(int(c)) for c in n) for n in tup]
                    self._rows[(key, tag)] = cells + [float(num), int(den), tag]
            if len(self._rows) > 2 * self.limit:
                self._prune()

    def _prune(self):
        for key in sorted(self._rows)[self.limit:]:
            del self._rows[key]

    @property
    def counts(self) -> Dict[str, int]:
        with self._lock:
            return {tag: len(seen) for tag, seen in self._seen.items()}

    @property
    def excluded(self) -> int:
        return self.counts["numerator-nonzero"]

    @property
    def fallback(self) -> int:
        return self.counts["numerator-zero"]

    def to_frame(self) -> pd.DataFrame:
        with self._lock:
            rows = [self._rows[key] for key in sorted(self._rows)[:self.limit]]
        return pd.DataFrame(rows, columns=self.COLUMNS)


class SlotSpectrum:
    """
    多线性形式中一个槽位的谱

    以中心化盒子存放系数：指标 n 位于 n + M/2，盒外视为 0。
    """

    def __init__(self, lattice: TorusLattice, coeffs: np.ndarray):
        self.lattice = lattice
        self.offset = lattice.M // 2
        self.box = np.fft.fftshift(np.asarray(coeffs, dtype=np.complex128))

    @classmethod
    def from_field(cls, f: SpectralField, conjugate: bool = False) -> "SlotSpectrum":
        source = f.conjugate() if conjugate else f
        return cls(f.lattice, source.coeffs)

    def lookup(self, ns: np.ndarray) -> np.ndarray:
        """取指标 (B, d) 处的系数"""
        pos = np.asarray(ns, dtype=np.int64) + self.offset
        valid = np.all((pos >= 0) & (pos < self.lattice.M), axis=1)
        out = np.zeros(len(pos), dtype=np.complex128)
        if valid.any():
            out[valid] = self.box[tuple(pos[valid].T)]
        return out

    def support(self) -> np.ndarray:
        """非零系数的指标，按字典序"""
        return np.argwhere(self.box != 0).astype(np.int64) - self.offset


@dataclass(frozen=True)
class FormEstimate:
    """多线性形式的取值（采样时附标准误差）"""

    value: complex
    stderr: float
    tuples: int
    excluded: int
    sampled: bool


# ---- Γ_n 枚举 ----

def gamma_n_enumerate(
    l: TorusLattice,
    n: int,
    mode: str = "exhaustive",
    count: Optional[int] = None,
    seed: Optional[int] = None,
    chunk: Optional[int] = None,
    budget: Optional[int] = None,
) -> Iterator[np.ndarray]:
    """
    枚举或均匀采样带内（排除 Nyquist）的 Γ_n 元组

    Args:
        l: 环面格点
        n: 阶数
        mode: "exhaustive" 或 "sample"
        count: 采样个数
        seed: 采样种子
        chunk: 每块元组数

    Yields:
        形状 (B, n, d) 的整数数组
    """
    if n < 2:
        raise DomainError("阶数必须 ≥ 2")
    chunk = chunk or settings.enumeration_chunk
    budget = settings.enumeration_budget if budget is None else budget
    band = l.band_indices()
    sizes = [len(band)] * (n - 1)

    if mode == "exhaustive":
        total = product_size(sizes)
        if total > budget:
            raise BudgetExceededError(f"Γ_{n} 穷举需要 {total} 个元组，超过预算 {budget}", total, budget)
        for start, stop in block_ranges(total, chunk):
            digits = mixed_radix_digits(start, stop, sizes)
            first = band[digits]
            last = -first.sum(axis=1)
            keep = l.in_band(last, allow_nyquist=False)
            if keep.any():
                yield np.concatenate([first[keep], last[keep][:, None, :]], axis=1)
        return

    if mode != "sample":
        raise DomainError(f"未知枚举模式: {mode}")
    if count is None or count < 0:
        raise DomainError("采样模式需要非负的 count")
    rng = np.random.default_rng(seed)
    remaining = count
    while remaining > 0:
        draws = rng.integers(0, len(band), size=(max(chunk, remaining), n - 1))
        first = band[draws]
        last = -first.sum(axis=1)
        keep = np.flatnonzero(l.in_band(last, allow_nyquist=False))[:remaining]
        if len(keep):
            remaining -= len(keep)
            yield np.concatenate([first[keep], last[keep][:, None, :]], axis=1)


# ---- 多线性形式 ----

def _block_values(
    symbol: MultilinearSymbol, last_slot: SlotSpectrum, ks_first: np.ndarray, prod_first: np.ndarray
) -> Tuple[np.ndarray, int, int]:
    last = -ks_first.sum(axis=1)
    v_last = last_slot.lookup(last)
    out = np.zeros(len(ks_first), dtype=np.complex128)
    mask = v_last != 0
    if not mask.any():
        return out, 0, 0
    ks = np.concatenate([ks_first[mask], last[mask][:, None, :]], axis=1)
    sym = symbol(ks)
    bad = np.isnan(sym)
    out[mask] = np.where(bad, 0.0, sym) * prod_first[mask] * v_last[mask]
    return out, int(bad.sum()), int(mask.sum())


def multilinear_form(
    symbol: MultilinearSymbol,
    slots: Sequence[SlotSpectrum],
    mode: str = "exhaustive",
    samples: Optional[int] = None,
    seed: int = 0,
    budget: Optional[int] = None,
    chunk: Optional[int] = None,
    stratify_threshold: Optional[float] = None,
    executor: Optional[Executor] = None,
) -> FormEstimate:
    """
    计算 Λ_n(M; 槽位谱)

    穷举时遍历前 n−1 个槽位支撑的笛卡尔积，最后一个指标由 Σk = 0 决定；
    采样时对前 n−1 个槽位均匀抽样，可按"高于阈值的槽位模式"分层。

    Args:
        symbol: 符号
        slots: n 个槽位谱
        mode: "exhaustive" 或 "sampled"
        samples: 采样个数
        seed: 采样种子
        budget: 穷举上限（超过即拒绝）
        chunk: 每块元组数
        stratify_threshold: 分层阈值（整数指标单位，|n| > 阈值视为高频）
        executor: 可选线程池，块结果按提交顺序归约

    Returns:
        FormEstimate
    """
    n = symbol.arity
    if len(slots) != n:
        raise DomainError(f"槽位数 {len(slots)} 与符号阶数 {n} 不符")
    lattice = symbol.lattice
    chunk = chunk or settings.enumeration_chunk
    budget = settings.enumeration_budget if budget is None else budget
    weight = lattice.lam ** (-lattice.d * (n - 1))

    cands = [slot.support() for slot in slots[:-1]]
    values = [slot.lookup(c) for slot, c in zip(slots[:-1], cands)]
    sizes = [len(c) for c in cands]
    total = product_size(sizes)
    if total == 0:
        return FormEstimate(0j, 0.0, 0, 0, mode != "exhaustive")

    if mode == "exhaustive":
        if total > budget:
            raise BudgetExceededError(f"{symbol.name} 穷举需要 {total} 个元组，超过预算 {budget}", total, budget)

        def run_block(bounds: Tuple[int, int]) -> Tuple[complex, int, int]:
            digits = mixed_radix_digits(bounds[0], bounds[1], sizes)
            ks_first = np.stack([cands[j][digits[:, j]] for j in range(n - 1)], axis=1)
            prod_first = np.prod(np.stack([values[j][digits[:, j]] for j in range(n - 1)], axis=1), axis=1)
            out, excluded, valid = _block_values(symbol, slots[-1], ks_first, prod_first)
            return complex(out.sum()), excluded, valid

        blocks = block_ranges(total, chunk)
        results = list(executor.map(run_block, blocks)) if executor else [run_block(b) for b in blocks]
        acc = sum((r[0] for r in results), 0j)
        excluded = sum(r[1] for r in results)
        valid = sum(r[2] for r in results)
        if excluded:
            logger.warning(f"{symbol.name}: 跳过 {excluded} 个被排除的共振元组")
        return FormEstimate(acc * weight, 0.0, valid, excluded, False)

    if mode != "sampled":
        raise DomainError(f"未知求值模式: {mode}")
    return _sampled_form(symbol, slots, cands, values, samples or settings.sample_count,
                         seed, stratify_threshold, chunk, weight)


def _sampled_form(symbol, slots, cands, values, samples, seed, threshold, chunk, weight) -> FormEstimate:
    n = symbol.arity
    rng = np.random.default_rng(seed)
    if threshold is None:
        groups = [[np.arange(len(c)) for c in cands]]
    else:
        high = [np.sum(c ** 2, axis=1) > threshold ** 2 for c in cands]
        groups = []
        for count in range(n):
            for pattern in combinations(range(n - 1), count):
                groups.append([np.flatnonzero(high[j]) if j in pattern else np.flatnonzero(~high[j])
                               for j in range(n - 1)])
    populations = np.array([product_size([len(g) for g in grp]) for grp in groups], dtype=np.float64)
    live = populations > 0
    share = populations / populations[live].sum()

    value, variance, excluded, tuples = 0j, 0.0, 0, 0
    for grp, pop, frac, alive in zip(groups, populations, share, live):
        if not alive:
            continue
        draws = max(2, int(round(samples * frac)))
        collected = []
        for start in range(0, draws, chunk):
            size = min(chunk, draws - start)
            picks = [g[rng.integers(0, len(g), size=size)] for g in grp]
            ks_first = np.stack([cands[j][picks[j]] for j in range(n - 1)], axis=1)
            prod_first = np.prod(np.stack([values[j][picks[j]] for j in range(n - 1)], axis=1), axis=1)
            out, bad, valid = _block_values(symbol, slots[-1], ks_first, prod_first)
            collected.append(out)
            excluded += bad
            tuples += valid
        sample = np.concatenate(collected)
        value += pop * sample.mean()
        variance += pop ** 2 * np.mean(np.abs(sample - sample.mean()) ** 2) / (len(sample) - 1)
    return FormEstimate(value * weight, float(np.sqrt(variance)) * weight, tuples, excluded, True)


def alternating_slots(f: SpectralField, n: int) -> List[SlotSpectrum]:
    """交替槽位 f, f̄, f, f̄, …"""
    plain = SlotSpectrum.from_field(f)
    conj = SlotSpectrum.from_field(f, conjugate=True)
    return [plain if j % 2 == 0 else conj for j in range(n)]


def lambda_n_estimate(Mn: MultilinearSymbol, f: SpectralField, **kwargs) -> FormEstimate:
    if Mn.lattice != f.lattice:
        raise DomainError("符号与场的格点不一致")
    return multilinear_form(Mn, alternating_slots(f, Mn.arity), **kwargs)


def lambda_n(Mn: MultilinearSymbol, f: SpectralField, **kwargs) -> float:
    """
    Λ_n(M_n; f) 的实部

    对具有对称性的符号，虚部应为舍入误差量级，超出 1e-10 相对量时给出警告。
    """
    est = lambda_n_estimate(Mn, f, **kwargs)
    scale = max(abs(est.value.real), 1e-300)
    if abs(est.value.imag) > 1e-10 * scale and abs(est.value.imag) > est.stderr * 5:
        logger.warning(f"{Mn.name}: 虚部残差 {est.value.imag:.3e} 相对实部 {est.value.real:.3e} 偏大")
    return float(est.value.real)


# ---- 符号构造 ----

def _physical(lattice: TorusLattice, ks: np.ndarray) -> np.ndarray:
    return ks / lattice.lam


def _m_of_index(p: IMethodParams, lattice: TorusLattice, ks: np.ndarray) -> np.ndarray:
    return m_values(p, np.sqrt(np.sum(ks.astype(np.float64) ** 2, axis=-1)) / lattice.lam)


def constant_symbol(lattice: TorusLattice, arity: int, value: float = 1.0) -> MultilinearSymbol:
    return MultilinearSymbol(arity, lambda ks: np.full(len(ks), float(value)), lattice, f"const{arity}")


def dot_symbol(lattice: TorusLattice) -> MultilinearSymbol:
    """M₂ = k₁·k₂（物理频率）"""
    def evaluate(ks):
        k = _physical(lattice, ks)
        return np.sum(k[:, 0] * k[:, 1], axis=-1)
    return MultilinearSymbol(2, evaluate, lattice, "k1.k2")


def kinetic_symbol(p: Optional[IMethodParams], lattice: TorusLattice) -> MultilinearSymbol:
    """(2π)² m₁k₁·m₂k₂，使 −½Λ₂ = ½‖∇If‖²"""
    def evaluate(ks):
        k = _physical(lattice, ks)
        dot = np.sum(k[:, 0] * k[:, 1], axis=-1)
        if p is None:
            return TWO_PI ** 2 * dot
        m = _m_of_index(p, lattice, ks)
        return TWO_PI ** 2 * m[:, 0] * m[:, 1] * dot
    return MultilinearSymbol(2, evaluate, lattice, "m1k1.m2k2")


def product_m_symbol(p: IMethodParams, lattice: TorusLattice, arity: int) -> MultilinearSymbol:
    """Π m(k_j)"""
    return MultilinearSymbol(arity, lambda ks: np.prod(_m_of_index(p, lattice, ks), axis=1),
                             lattice, f"prod_m{arity}")


def combine_symbols(terms: Sequence[Tuple[float, MultilinearSymbol]], name: str = "") -> MultilinearSymbol:
    """线性组合，被排除的分量按 0 计入"""
    arity = terms[0][1].arity
    lattice = terms[0][1].lattice
    if any(sym.arity != arity for _, sym in terms):
        raise DomainError("线性组合的符号阶数必须一致")

    def evaluate(ks):
        total = np.zeros(len(ks))
        for coef, sym in terms:
            total += coef * np.nan_to_num(sym(ks), nan=0.0)
        return total
    return MultilinearSymbol(arity, evaluate, lattice, name or "+".join(sym.name for _, sym in terms))


def dispersion_weighted(Mn: MultilinearSymbol) -> MultilinearSymbol:
    """M_n · Σ_j (−1)^j (2π|k_j|)²（j 从 1 计）"""
    signs = np.array([(-1) ** (j + 1) for j in range(Mn.arity)], dtype=np.float64)
    lattice = Mn.lattice

    def evaluate(ks):
        k_sq = np.sum(_physical(lattice, ks) ** 2, axis=-1)
        return Mn(ks) * TWO_PI ** 2 * (k_sq @ signs)
    return MultilinearSymbol(Mn.arity, evaluate, lattice, f"{Mn.name}*disp")


def elongate(Mn: MultilinearSymbol, j: int, l: int, band_limited: bool = False) -> MultilinearSymbol:
    """
    延长 X_j^l(M_n)：第 j 个变量替换为 k_j + … + k_{j+l}

    Args:
        Mn: 原符号
        j: 被替换的位置（从 1 计）
        l: 增加的阶数（偶数）
        band_limited: 合并后的指标落在带外（或 Nyquist）时取 0，
            与带内截断轨道的微分律一致
    """
    if not 1 <= j <= Mn.arity:
        raise DomainError(f"延长位置 j={j} 超出 1..{Mn.arity}")
    if l < 2 or l % 2:
        raise DomainError(f"延长阶数 l={l} 必须为正偶数")
    lattice = Mn.lattice
    start = j - 1

    def evaluate(ks):
        merged = ks[:, start:start + l + 1].sum(axis=1)
        reduced = np.concatenate([ks[:, :start], merged[:, None, :], ks[:, start + l + 1:]], axis=1)
        out = Mn(reduced)
        if band_limited:
            out = np.where(lattice.in_band(merged, allow_nyquist=False), out, 0.0)
        return out
    return MultilinearSymbol(Mn.arity + l, evaluate, lattice, f"X{j}^{l}({Mn.name})")
