"""
环面格点模块
定义重标度环面 T^d_λ、频率格点 (1/λ)Z^d 以及归一化计数测度 (dk)_λ

约定：
- 频率指标 n ∈ Z^d，每个分量满足 −M/2 ≤ n_i < M/2，物理频率 k = n/λ
- 系数数组按 numpy FFT 顺序存放（第 j 个位置对应 n = fftfreq 指标）
- n_i = −M/2 为 Nyquist 指标，所有生成的场在该处系数为 0
"""
import math
from typing import Dict, Tuple, Union, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from app.core.exceptions import DomainError


class TorusLattice(BaseModel):
    """重标度环面及其带限频率格点"""

    model_config = ConfigDict(frozen=True)

    d: int
    lam: float
    M: int

    @field_validator("d")
    @classmethod
    def _check_dimension(cls, v: int) -> int:
        if v not in (1, 2):
            raise ValueError("维数必须为 1 或 2")
        return v

    @field_validator("lam")
    @classmethod
    def _check_period(cls, v: float) -> float:
        if not (v > 0 and math.isfinite(v)):
            raise ValueError("周期 λ 必须为正的有限实数")
        return float(v)

    @field_validator("M")
    @classmethod
    def _check_bandlimit(cls, v: int) -> int:
        if v < 4 or v % 2:
            raise ValueError("带限 M 必须为 ≥ 4 的偶数")
        return v

    # ---- 网格与指标 ----

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.M,) * self.d

    @property
    def spacing(self) -> float:
        """物理网格间距 λ/M"""
        return self.lam / self.M

    @property
    def cell_volume(self) -> float:
        """矩形求积权重 (λ/M)^d"""
        return self.spacing ** self.d

    @property
    def measure_weight(self) -> float:
        """计数测度权重 λ^{-d}"""
        return self.lam ** (-self.d)

    @property
    def nyquist(self) -> int:
        return -self.M // 2

    def axis_indices(self) -> np.ndarray:
        """单轴整数指标（FFT 顺序）"""
        return np.fft.fftfreq(self.M, d=1.0 / self.M).round().astype(np.int64)

    def index_grid(self) -> Tuple[np.ndarray, ...]:
        """各分量的整数指标网格（FFT 顺序）"""
        axis = self.axis_indices()
        return np.meshgrid(*([axis] * self.d), indexing="ij")

    def wavenumber_grid(self) -> Tuple[np.ndarray, ...]:
        """物理频率网格 k = n/λ"""
        return tuple(n / self.lam for n in self.index_grid())

    def index_norm_sq(self) -> np.ndarray:
        """|n|² 网格（整数）"""
        return sum(n.astype(np.int64) ** 2 for n in self.index_grid())

    def k_norm_sq(self) -> np.ndarray:
        """|k|² 网格"""
        return self.index_norm_sq() / self.lam ** 2

    def k_norm(self) -> np.ndarray:
        return np.sqrt(self.k_norm_sq())

    def nyquist_mask(self) -> np.ndarray:
        """任一分量为 Nyquist 指标的位置"""
        mask = np.zeros(self.shape, dtype=bool)
        for n in self.index_grid():
            mask |= n == self.nyquist
        return mask

    def band_indices(self) -> np.ndarray:
        """
        带内（排除 Nyquist）的全部指标，按字典序排列

        Returns:
            形状为 (B, d) 的整数数组
        """
        axis = np.arange(-self.M // 2 + 1, self.M // 2, dtype=np.int64)
        grids = np.meshgrid(*([axis] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @property
    def band_size(self) -> int:
        return (self.M - 1) ** self.d

    def in_band(self, n: np.ndarray, allow_nyquist: bool = True) -> np.ndarray:
        """
        判断指标是否在带内

        Args:
            n: 形状 (..., d) 的整数数组
            allow_nyquist: 是否把 −M/2 视为带内
        """
        n = np.asarray(n)
        low = self.nyquist if allow_nyquist else self.nyquist + 1
        return np.all((n >= low) & (n < self.M // 2), axis=-1)

    def flat_position(self, n: np.ndarray) -> np.ndarray:
        """指标在 FFT 顺序数组中的位置（逐分量取模）"""
        return np.mod(np.asarray(n), self.M)

    def physical_grid(self) -> Tuple[np.ndarray, ...]:
        """物理网格点 x_j = jλ/M"""
        x = np.arange(self.M) * self.spacing
        return tuple(np.meshgrid(*([x] * self.d), indexing="ij"))

    def padded_size(self, degree: int) -> int:
        """
        计算无混叠的补零网格大小

        degree 次带限乘积在边长 L ≥ (degree+1)·M/2 的网格上既不会混叠回带内，
        也不会混叠到零模，因此投影与积分都是精确的。

        Args:
            degree: 乘积中带限因子的个数

        Returns:
            偶数网格大小 L
        """
        size = math.ceil((degree + 1) * self.M / 2)
        return max(self.M, size + (size % 2))

    def rescaled(self, lam: float) -> "TorusLattice":
        return TorusLattice(d=self.d, lam=lam, M=self.M)


FrequencyIndex = Union[int, Sequence[int]]


def _as_index(l: TorusLattice, n: FrequencyIndex) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(n, dtype=np.int64))
    if arr.shape != (l.d,):
        raise DomainError(f"频率指标维数 {arr.shape} 与格点维数 {l.d} 不符")
    return arr


def measure_integrate(l: TorusLattice, a: Union[np.ndarray, Dict]) -> complex:
    """
    对计数测度 (dk)_λ 积分：λ^{-d} Σ a(k)

    Args:
        l: 环面格点
        a: FFT 顺序的数组（形状与 l.shape 一致），或指标到数值的字典（缺省项视为 0）

    Returns:
        积分值
    """
    if isinstance(a, dict):
        total = sum(a.values(), 0.0)
    else:
        arr = np.asarray(a)
        if arr.shape != l.shape:
            raise DomainError(f"数组形状 {arr.shape} 与格点 {l.shape} 不符")
        total = arr.sum()
    return complex(total) * l.measure_weight


def frequency_of(l: TorusLattice, n: FrequencyIndex) -> np.ndarray:
    """
    指标到物理频率的映射 k = n/λ

    Args:
        l: 环面格点
        n: 整数指标（1D 可为标量）

    Returns:
        长度为 d 的实数向量
    """
    arr = _as_index(l, n)
    if not l.in_band(arr):
        raise DomainError(f"指标 {arr.tolist()} 超出带限 M={l.M}")
    return arr / l.lam
