"""
谱场模块
带限场的表示、与积分约定一致的正/逆离散傅里叶变换、Sobolev 范数、
时空范数（X^{s,b}、L^p_t L^p_x）以及线性传播子 U_λ(t)

傅里叶约定：f̂(k) = ∫_{[0,λ]^d} e^{−2πik·x} f(x) dx，
离散实现为 f̂ = (λ/M)^d · fftn(f)，f = (M/λ)^d · ifftn(f̂)。
"""
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sfft
from loguru import logger

from app.core.config import settings
from app.core.exceptions import DomainError
from app.core.torus_lattice import TorusLattice, FrequencyIndex

TWO_PI = 2.0 * np.pi


class SpectralField:
    """带限 λ-周期函数的傅里叶系数（不可变）"""

    __slots__ = ("lattice", "coeffs")

    def __init__(self, lattice: TorusLattice, coeffs: np.ndarray):
        arr = np.array(coeffs, dtype=np.complex128)
        if arr.shape != lattice.shape:
            raise DomainError(f"系数形状 {arr.shape} 与格点 {lattice.shape} 不符")
        arr.setflags(write=False)
        object.__setattr__(self, "lattice", lattice)
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, key, value):
        raise AttributeError("SpectralField 不可变")

    @classmethod
    def zeros(cls, lattice: TorusLattice) -> "SpectralField":
        return cls(lattice, np.zeros(lattice.shape, dtype=np.complex128))

    @classmethod
    def from_coefficients(cls, lattice: TorusLattice, values: Dict) -> "SpectralField":
        """
        由指标到系数的字典构造场

        Args:
            lattice: 环面格点
            values: {n: f̂(n/λ)}，1D 时 n 可为整数
        """
        coeffs = np.zeros(lattice.shape, dtype=np.complex128)
        for n, value in values.items():
            idx = np.atleast_1d(np.asarray(n, dtype=np.int64))
            if idx.shape != (lattice.d,) or not lattice.in_band(idx):
                raise DomainError(f"指标 {n} 不在带内")
            coeffs[tuple(lattice.flat_position(idx))] = value
        return cls(lattice, coeffs)

    def coefficient(self, n: FrequencyIndex) -> complex:
        idx = np.atleast_1d(np.asarray(n, dtype=np.int64))
        if not self.lattice.in_band(idx):
            raise DomainError(f"指标 {n} 不在带内")
        return complex(self.coeffs[tuple(self.lattice.flat_position(idx))])

    def conjugate(self) -> "SpectralField":
        """f̄ 的谱：conj(f̂(−k))"""
        c = np.conj(self.coeffs)
        for axis in range(self.lattice.d):
            c = np.roll(np.flip(c, axis=axis), 1, axis=axis)
        return SpectralField(self.lattice, c)

    def nyquist_is_zero(self) -> bool:
        return bool(np.all(self.coeffs[self.lattice.nyquist_mask()] == 0))

    def with_nyquist_zeroed(self) -> "SpectralField":
        c = self.coeffs.copy()
        c[self.lattice.nyquist_mask()] = 0
        return SpectralField(self.lattice, c)

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def _check_same(self, other: "SpectralField"):
        if self.lattice != other.lattice:
            raise DomainError("两个场的格点不一致")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_same(other)
        return SpectralField(self.lattice, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_same(other)
        return SpectralField(self.lattice, self.coeffs - other.coeffs)

    def __mul__(self, scalar: complex) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs * scalar)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"SpectralField(d={self.lattice.d}, lam={self.lattice.lam}, M={self.lattice.M})"


class FrequencyMultiplier:
    """格点上的实值傅里叶乘子"""

    def __init__(self, lattice: TorusLattice, symbol: np.ndarray, name: str = ""):
        arr = np.array(symbol, dtype=np.float64)
        if arr.shape != lattice.shape:
            raise DomainError(f"符号形状 {arr.shape} 与格点 {lattice.shape} 不符")
        if not np.all(np.isfinite(arr)):
            raise DomainError("乘子符号在带内必须处处有限")
        arr.setflags(write=False)
        self.lattice = lattice
        self.symbol = arr
        self.name = name


class SpaceTimeField:
    """
    时间窗上的一列谱场

    时间网格为 t_j = t0 + j·dt（均匀且严格递增），系数按 (T, M, ..., M) 堆叠。
    window 为可选的截断函数 η 在时间网格上的取值。
    """

    def __init__(
        self,
        lattice: TorusLattice,
        t0: float,
        dt: float,
        coeffs: np.ndarray,
        window: Optional[np.ndarray] = None,
    ):
        arr = np.asarray(coeffs, dtype=np.complex128)
        if arr.ndim != lattice.d + 1 or arr.shape[1:] != lattice.shape:
            raise DomainError(f"帧数组形状 {arr.shape} 与格点 {lattice.shape} 不符")
        if arr.shape[0] < 1:
            raise DomainError("时空场至少需要一帧")
        if not dt > 0:
            raise DomainError("时间步长必须为正")
        if window is not None:
            window = np.asarray(window, dtype=np.float64)
            if window.shape != (arr.shape[0],):
                raise DomainError("窗函数长度必须等于帧数")
        self.lattice = lattice
        self.t0 = float(t0)
        self.dt = float(dt)
        self.coeffs = arr
        self.window = window

    @classmethod
    def from_frames(
        cls, t0: float, dt: float, frames: Sequence[SpectralField], window: Optional[np.ndarray] = None
    ) -> "SpaceTimeField":
        lattice = frames[0].lattice
        for f in frames:
            if f.lattice != lattice:
                raise DomainError("所有帧必须共享同一格点")
        return cls(lattice, t0, dt, np.stack([f.coeffs for f in frames]), window)

    @classmethod
    def free_evolution(
        cls, phi: SpectralField, t0: float, dt: float, count: int, window: Optional[np.ndarray] = None
    ) -> "SpaceTimeField":
        """自由演化 U(t)φ 在均匀时间网格上的取样"""
        times = t0 + dt * np.arange(count)
        phases = np.exp(-1j * TWO_PI ** 2 * np.multiply.outer(times, phi.lattice.k_norm_sq()))
        return cls(phi.lattice, t0, dt, phases * phi.coeffs[None], window)

    @property
    def n_frames(self) -> int:
        return self.coeffs.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_frames)

    def frame(self, i: int) -> SpectralField:
        return SpectralField(self.lattice, self.coeffs[i])

    @property
    def frames(self) -> List[SpectralField]:
        return [self.frame(i) for i in range(self.n_frames)]

    def frame_at(self, t: float) -> int:
        """时间 t 对应的帧序号（t 必须落在网格上）"""
        pos = (t - self.t0) / self.dt
        idx = int(round(pos))
        if abs(pos - idx) > 1e-6 or not 0 <= idx < self.n_frames:
            raise DomainError(f"时间 {t} 不在帧网格上")
        return idx

    def with_window(self, window: Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]) -> "SpaceTimeField":
        values = window(self.times) if callable(window) else window
        return SpaceTimeField(self.lattice, self.t0, self.dt, self.coeffs, values)

    def window_values(self) -> np.ndarray:
        return np.ones(self.n_frames) if self.window is None else self.window


# ---- 傅里叶变换 ----

def _space_axes(lattice: TorusLattice, lead: int) -> Tuple[int, ...]:
    return tuple(range(lead, lead + lattice.d))


def fft_forward(lattice: TorusLattice, values: np.ndarray) -> SpectralField:
    """
    物理网格取值 → 谱场

    Args:
        lattice: 环面格点
        values: 形状为 lattice.shape 的网格取值（x_j = jλ/M）
    """
    arr = np.asarray(values)
    if arr.shape != lattice.shape:
        raise DomainError(f"网格形状 {arr.shape} 与格点 {lattice.shape} 不符")
    return SpectralField(lattice, lattice.cell_volume * sfft.fftn(arr))


def fft_inverse(f: SpectralField) -> np.ndarray:
    """谱场 → 物理网格取值"""
    return sfft.ifftn(f.coeffs) / f.lattice.cell_volume


def _embed_positions(lattice: TorusLattice, size: int) -> Tuple[np.ndarray, ...]:
    pos = np.mod(lattice.axis_indices(), size)
    return np.ix_(*([pos] * lattice.d))


def padded_values(lattice: TorusLattice, coeffs: np.ndarray, size: int) -> np.ndarray:
    """
    在边长 size 的补零网格上求物理取值

    Args:
        lattice: 环面格点
        coeffs: 形状 (..., M, ..., M) 的系数，前导维度视为批次
        size: 补零网格边长 L ≥ M
    """
    lead = coeffs.ndim - lattice.d
    out = np.zeros(coeffs.shape[:lead] + (size,) * lattice.d, dtype=np.complex128)
    out[(Ellipsis,) + _embed_positions(lattice, size)] = coeffs
    return sfft.ifftn(out, axes=_space_axes(lattice, lead)) * (size / lattice.lam) ** lattice.d


def band_projection(lattice: TorusLattice, values: np.ndarray) -> np.ndarray:
    """补零网格取值 → 带内系数（Galerkin 投影，Nyquist 置零）"""
    size = values.shape[-1]
    lead = values.ndim - lattice.d
    spec = sfft.fftn(values, axes=_space_axes(lattice, lead)) * (lattice.lam / size) ** lattice.d
    coeffs = spec[(Ellipsis,) + _embed_positions(lattice, size)].copy()
    nyq = lattice.nyquist_mask()
    coeffs[..., nyq] = 0
    return coeffs


def multiply(f: SpectralField, g: SpectralField) -> SpectralField:
    """乘积 fg 的带内投影，补零网格上计算以消除混叠"""
    f._check_same(g)
    size = f.lattice.padded_size(2)
    vals = padded_values(f.lattice, f.coeffs, size) * padded_values(g.lattice, g.coeffs, size)
    return SpectralField(f.lattice, band_projection(f.lattice, vals))


def power_nonlinearity_coeffs(lattice: TorusLattice, coeffs: np.ndarray, q: int) -> np.ndarray:
    """P(|u|^{2q} u) 的系数（支持批次维度）"""
    size = lattice.padded_size(2 * q + 1)
    u = padded_values(lattice, coeffs, size)
    return band_projection(lattice, (np.abs(u) ** 2) ** q * u)


def power_nonlinearity(f: SpectralField, q: int) -> SpectralField:
    """
    非线性项 P(|f|^{2q} f)

    Args:
        f: 谱场
        q: 1D 五次方程取 2，2D 三次方程取 1
    """
    return SpectralField(f.lattice, power_nonlinearity_coeffs(f.lattice, f.coeffs, q))


def potential_integral(f: SpectralField, p: float) -> float:
    """∫|f|^p dx，p 为偶数时补零网格求积是精确的"""
    size = f.lattice.padded_size(int(np.ceil(p)))
    u = padded_values(f.lattice, f.coeffs, size)
    return float(np.sum(np.abs(u) ** p) * (f.lattice.lam / size) ** f.lattice.d)


# ---- 范数与内积 ----

def mass(f: SpectralField) -> float:
    """‖f‖²_{L²} = λ^{-d} Σ |f̂|²"""
    return float(np.sum(np.abs(f.coeffs) ** 2) * f.lattice.measure_weight)


def inner_product(f: SpectralField, g: SpectralField) -> complex:
    """∫ f ḡ dx（Parseval）"""
    f._check_same(g)
    return complex(np.sum(f.coeffs * np.conj(g.coeffs)) * f.lattice.measure_weight)


def sobolev_norm(f: SpectralField, s: float) -> float:
    """
    非齐次 Sobolev 范数 (λ^{-d} Σ ⟨k⟩^{2s} |f̂(k)|²)^{1/2}，⟨k⟩ = 1 + |k|
    """
    weight = (1.0 + f.lattice.k_norm()) ** (2 * s)
    return float(np.sqrt(np.sum(weight * np.abs(f.coeffs) ** 2) * f.lattice.measure_weight))


def homogeneous_sobolev_norm(f: SpectralField, s: float) -> float:
    """齐次半范数，权重 |k|^s，零模不计"""
    k = f.lattice.k_norm()
    safe = np.where(k > 0, k, 1.0)
    weight = np.where(k > 0, safe ** (2 * s), 0.0)
    return float(np.sqrt(np.sum(weight * np.abs(f.coeffs) ** 2) * f.lattice.measure_weight))


def kinetic_norm(f: SpectralField) -> float:
    """‖∇f‖_{L²}"""
    weight = TWO_PI ** 2 * f.lattice.k_norm_sq()
    return float(np.sqrt(np.sum(weight * np.abs(f.coeffs) ** 2) * f.lattice.measure_weight))


# ---- 线性传播子与乘子 ----

def propagate_linear(f: SpectralField, t: float) -> SpectralField:
    """U(t)f：系数乘以 e^{−4π²|k|² i t}（求解 iu_t + Δu = 0）"""
    phase = np.exp(-1j * TWO_PI ** 2 * f.lattice.k_norm_sq() * t)
    return SpectralField(f.lattice, f.coeffs * phase)


def bessel_multiplier(lattice: TorusLattice, s: float) -> FrequencyMultiplier:
    """Bessel 权 ⟨k⟩^s"""
    return FrequencyMultiplier(lattice, (1.0 + lattice.k_norm()) ** s, name=f"bessel({s})")


def apply_multiplier(m: FrequencyMultiplier, f: SpectralField) -> SpectralField:
    """逐系数乘以符号"""
    if m.lattice != f.lattice:
        raise DomainError("乘子与场的格点不一致")
    return SpectralField(f.lattice, m.symbol * f.coeffs)


# ---- 时间截断与时空范数 ----

def bump_window(t: np.ndarray) -> np.ndarray:
    """
    光滑截断 η：[−1,1] 上为 1，[−2,2] 外为 0，
    1 < |t| < 2 上取 exp(1 − 1/(1 − (|t|−1)²))
    """
    t = np.abs(np.asarray(t, dtype=np.float64))
    out = np.zeros_like(t)
    out[t <= 1.0] = 1.0
    glue = (t > 1.0) & (t < 2.0)
    r = t[glue] - 1.0
    out[glue] = np.exp(1.0 - 1.0 / (1.0 - r ** 2))
    return out


def window_grid(frames: int, half_width: float = 2.0) -> Tuple[float, float]:
    """[−2, 2) 上的均匀时间网格，返回 (t0, dt)"""
    return -half_width, 2.0 * half_width / frames


def xsb_norm(u: SpaceTimeField, s: float, b: float) -> float:
    """
    离散 X^{s,b} 范数

    在相互作用表象 v = U(−t)(η u) 中做离散时间傅里叶变换，
    以 ⟨k⟩^{2s}⟨τ⟩^{2b} 加权求和；自由解的 ṽ 正好集中在 τ = 0。

    Args:
        u: 时空场（若带窗函数则先乘以窗）
        s: 空间正则性
        b: 时间正则性
    """
    if u.n_frames < settings.xsb_min_frames:
        raise DomainError(f"X^(s,b) 范数至少需要 {settings.xsb_min_frames} 帧，当前 {u.n_frames}")
    lattice = u.lattice
    shape = (u.n_frames,) + (1,) * lattice.d
    undo = np.exp(1j * TWO_PI ** 2 * np.multiply.outer(u.times, lattice.k_norm_sq()))
    v = u.window_values().reshape(shape) * undo * u.coeffs
    v_hat = u.dt * sfft.fft(v, axis=0)
    tau = np.fft.fftfreq(u.n_frames, d=u.dt)
    weight = (1.0 + np.abs(tau)).reshape(shape) ** (2 * b) * (1.0 + lattice.k_norm()) ** (2 * s)
    total = np.sum(weight * np.abs(v_hat) ** 2) * lattice.measure_weight / (u.n_frames * u.dt)
    return float(np.sqrt(total))


def lp_spacetime_norm(u: SpaceTimeField, p: float, batch: int = 32) -> float:
    """
    L^p_t L^p_x 范数：补零网格与帧上的矩形求积

    Args:
        u: 时空场（若带窗函数则先乘以窗）
        p: 指数，p ≥ 1
    """
    if p < 1:
        raise DomainError(f"指数 p={p} 必须 ≥ 1")
    lattice = u.lattice
    size = lattice.padded_size(max(2, int(np.ceil(p))))
    window = u.window_values()
    total = 0.0
    for start in range(0, u.n_frames, batch):
        stop = min(start + batch, u.n_frames)
        vals = padded_values(lattice, u.coeffs[start:stop], size)
        w = window[start:stop].reshape((-1,) + (1,) * lattice.d)
        total += float(np.sum(np.abs(w * vals) ** p))
    total *= (lattice.lam / size) ** lattice.d * u.dt
    logger.debug(f"L^{p} 时空求积: 帧数={u.n_frames}, 网格={size}")
    return total ** (1.0 / p)
