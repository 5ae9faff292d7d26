"""
格点计数模块
Pick 公式、短圆弧上的格点、凸域格点数（Gauss）以及一维集合 S、二维集合 A^λ
的精确枚举与上界核验

所有成员判定都在整数或有理数（fractions.Fraction）下完成。
环形约定：|k| ∼ A 表示 A/2 ≤ |k| ≤ 2A。
"""
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.exceptions import DomainError

Point = Tuple[int, int]


def _q(x: Union[int, float, Fraction, str]) -> Fraction:
    """十进制字面量按字面精确转为有理数"""
    if isinstance(x, Fraction):
        return x
    return Fraction(str(x))


# ---- Pick 公式 ----

def _cross(o: Point, a: Point, b: Point) -> int:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _on_segment(p: Point, q: Point, r: Point) -> bool:
    """r 与 p、q 共线时，r 是否落在线段 pq 上"""
    return min(p[0], q[0]) <= r[0] <= max(p[0], q[0]) and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])


def _segments_touch(p1: Point, p2: Point, p3: Point, p4: Point) -> bool:
    d1 = _cross(p3, p4, p1)
    d2 = _cross(p3, p4, p2)
    d3 = _cross(p1, p2, p3)
    d4 = _cross(p1, p2, p4)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 and d2 and d3 and d4:
        return True
    if d1 == 0 and _on_segment(p3, p4, p1):
        return True
    if d2 == 0 and _on_segment(p3, p4, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, p3):
        return True
    if d4 == 0 and _on_segment(p1, p2, p4):
        return True
    return False


def is_simple_polygon(vertices: Sequence[Point]) -> bool:
    """
    判断闭合折线是否为简单多边形

    不相邻的边不得相交或接触；相邻的边只能在公共顶点处相接（不得折返重叠）。
    """
    n = len(vertices)
    if n < 3 or len(set(map(tuple, vertices))) != n:
        return False
    edges = [(tuple(vertices[i]), tuple(vertices[(i + 1) % n])) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            a, b = edges[i]
            c, d = edges[j]
            if j == i + 1 or (i == 0 and j == n - 1):
                # 相邻边：共线且方向相反即为折返
                shared, far_i, far_j = (b, a, d) if j == i + 1 else (a, b, c)
                if _cross(shared, far_i, far_j) == 0:
                    dot = (far_i[0] - shared[0]) * (far_j[0] - shared[0]) + (far_i[1] - shared[1]) * (far_j[1] - shared[1])
                    if dot > 0:
                        return False
                continue
            if _segments_touch(a, b, c, d):
                return False
    return _shoelace_twice(vertices) != 0


def _shoelace_twice(vertices: Sequence[Point]) -> int:
    n = len(vertices)
    return sum(vertices[i][0] * vertices[(i + 1) % n][1] - vertices[(i + 1) % n][0] * vertices[i][1] for i in range(n))


@dataclass(frozen=True)
class LatticePolygon:
    """逆时针排列的简单格点多边形"""

    vertices: Tuple[Point, ...]

    def __post_init__(self):
        verts = tuple((int(x), int(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise DomainError("多边形至少需要 3 个顶点")
        if not is_simple_polygon(verts):
            raise DomainError(f"多边形不是简单多边形: {verts}")
        if _shoelace_twice(verts) < 0:
            verts = verts[::-1]
        object.__setattr__(self, "vertices", verts)

    def edges(self) -> List[Tuple[Point, Point]]:
        n = len(self.vertices)
        return [(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]


def shoelace_area(p: LatticePolygon) -> Fraction:
    return Fraction(_shoelace_twice(p.vertices), 2)


def pick_counts(p: LatticePolygon) -> Tuple[int, int]:
    """
    内部格点数 I 与边界格点数 E

    E = Σ gcd(|Δx|, |Δy|)；I 在包围盒上用整数射线法逐点判定。
    """
    boundary = sum(math.gcd(abs(b[0] - a[0]), abs(b[1] - a[1])) for a, b in p.edges())
    xs = [v[0] for v in p.vertices]
    ys = [v[1] for v in p.vertices]
    gx, gy = np.meshgrid(np.arange(min(xs), max(xs) + 1, dtype=np.int64),
                         np.arange(min(ys), max(ys) + 1, dtype=np.int64), indexing="ij")
    px, py = gx.ravel(), gy.ravel()
    inside = np.zeros(len(px), dtype=bool)
    on_edge = np.zeros(len(px), dtype=bool)
    for (x1, y1), (x2, y2) in p.edges():
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        within = (px >= min(x1, x2)) & (px <= max(x1, x2)) & (py >= min(y1, y2)) & (py <= max(y1, y2))
        on_edge |= (cross == 0) & within
        straddle = (y1 > py) != (y2 > py)
        # 交点横坐标大于 px ⇔ (px − x1)(y2 − y1) 与 (py − y1)(x2 − x1) 的比较，方向取决于 y2 − y1 的符号
        lhs = (px - x1) * (y2 - y1)
        rhs = (py - y1) * (x2 - x1)
        crosses = np.where(y2 > y1, lhs < rhs, lhs > rhs)
        inside ^= straddle & crosses
    interior = int(np.count_nonzero(inside & ~on_edge))
    return interior, boundary


def pick_area(p: LatticePolygon) -> Tuple[Fraction, Fraction]:
    """
    Pick 公式面积 I + E/2 − 1 与鞋带公式面积（两者应精确相等）

    Returns:
        (area_via_pick, area_via_shoelace)
    """
    interior, boundary = pick_counts(p)
    return interior + Fraction(boundary, 2) - 1, shoelace_area(p)


def random_lattice_polygon(rng: np.random.Generator, n_vertices: int = 6, box: int = 12, attempts: int = 100) -> LatticePolygon:
    """在 [0, box]² 中随机取点，按绕质心的极角排序得到星形简单多边形"""
    for _ in range(attempts):
        pts = {tuple(int(c) for c in rng.integers(0, box + 1, size=2)) for _ in range(n_vertices)}
        if len(pts) < 3:
            continue
        arr = np.array(sorted(pts), dtype=np.float64)
        center = arr.mean(axis=0)
        order = np.argsort(np.arctan2(arr[:, 1] - center[1], arr[:, 0] - center[0]), kind="stable")
        verts = [tuple(int(c) for c in arr[i]) for i in order]
        if is_simple_polygon(verts):
            return LatticePolygon(tuple(verts))
    raise DomainError(f"{attempts} 次尝试后仍未生成简单多边形")


# ---- 圆弧上的格点 ----

def _exact_sqrt(q: Fraction) -> Optional[Fraction]:
    if q < 0:
        return None
    num, den = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if num * num == q.numerator and den * den == q.denominator:
        return Fraction(num, den)
    return None


def arc_lattice_points(
    radius_sq: Union[int, Fraction, str],
    center: Tuple = (0, 0),
    arc: Optional[Tuple[float, float]] = None,
) -> List[Point]:
    """
    圆 (x − c_x)² + (y − c_y)² = R² 上、落在给定圆弧内的全部格点

    Args:
        radius_sq: 半径平方 R²（有理数）
        center: 圆心（有理数对）
        arc: 极角区间 (起点, 终点)，弧度，逆时针；缺省为整圆

    Returns:
        按极角排序的格点列表
    """
    r2 = _q(radius_sq)
    if r2 <= 0:
        raise DomainError("半径必须为正")
    cx, cy = _q(center[0]), _q(center[1])
    radius = math.isqrt(math.ceil(r2)) + 1
    points = []
    for x in range(math.floor(cx - radius), math.ceil(cx + radius) + 1):
        root = _exact_sqrt(r2 - (x - cx) ** 2)
        if root is None:
            continue
        for y in {cy + root, cy - root}:
            if y.denominator == 1:
                points.append((x, int(y)))

    def angle(pt: Point) -> float:
        return math.atan2(float(pt[1] - cy), float(pt[0] - cx)) % (2 * math.pi)

    if arc is not None:
        start, stop = arc
        width = stop - start
        points = [pt for pt in points if (angle(pt) - start) % (2 * math.pi) <= width]
    return sorted(points, key=angle)


def arc_lemma_violations(max_r2: int = 40000, min_r2: int = 4) -> Dict:
    """
    穷举核验：半径 R 的圆上，长度小于 (3R/4)^{1/3} 的弧至多含 2 个格点

    对每个 min_r2 ≤ R² ≤ max_r2，把圆上格点按极角排序，检查每组循环相邻的三个点
    所张的弧长。

    Returns:
        {"circles", "triples", "violations", "min_ratio"}，min_ratio 为
        弧长/(3R/4)^{1/3} 的最小值（≥ 1 表示引理成立）
    """
    bound = math.isqrt(max_r2)
    axis = np.arange(-bound, bound + 1, dtype=np.int64)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    n = (gx ** 2 + gy ** 2).ravel()
    keep = (n >= min_r2) & (n <= max_r2)
    n, x, y = n[keep], gx.ravel()[keep], gy.ravel()[keep]
    theta = np.mod(np.arctan2(y, x), 2 * np.pi)
    order = np.lexsort((theta, n))
    n, theta = n[order], theta[order]

    radii, starts, counts = np.unique(n, return_index=True, return_counts=True)
    busy = counts >= 3
    group = np.repeat(np.arange(len(radii)), counts)
    member = busy[group]
    idx = np.flatnonzero(member)
    pos = idx - starts[group[idx]]
    partner = starts[group[idx]] + (pos + 2) % counts[group[idx]]
    span = np.mod(theta[partner] - theta[idx], 2 * np.pi)
    radius = np.sqrt(n[idx].astype(np.float64))
    ratio = span * radius / (0.75 * radius) ** (1.0 / 3.0)
    bad = ratio < 1.0
    violations = [
        {"r2": int(n[i]), "span": float(s)} for i, s in zip(idx[bad][:100], span[bad][:100])
    ]
    result = {
        "circles": int(busy.sum()),
        "triples": int(len(idx)),
        "violations": violations,
        "violation_count": int(bad.sum()),
        "min_ratio": float(ratio.min()) if len(ratio) else math.inf,
    }
    logger.info(f"圆弧引理核验 R² ≤ {max_r2}: 圆 {result['circles']} 个, 三点组 {result['triples']} 个, 违例 {result['violation_count']}")
    return result


# ---- Gauss 凸域计数 ----

class Disk(BaseModel):
    """以原点为心、半径 r 的闭圆盘"""

    model_config = ConfigDict(frozen=True)

    r: float = Field(gt=0)

    @property
    def area(self) -> float:
        return math.pi * self.r ** 2


RAY_DENOMINATOR = 10 ** 9


class Sector(BaseModel):
    """
    环形扇区 r1 ≤ |z| ≤ r2，极角 0 ≤ arg z ≤ θ

    终边给成整数向量 ray 时极角判定完全精确。只给 θ 时终边取 (cos θ, sin θ)
    在分母不超过 RAY_DENOMINATOR 下的最佳有理逼近，θ 为 π/2 的倍数时恰好落在坐标轴上。
    """

    model_config = ConfigDict(frozen=True)

    r1: float = Field(ge=0)
    r2: float = Field(gt=0)
    theta: float = Field(ge=0, le=2 * math.pi)
    ray: Optional[Tuple[int, int]] = None

    @model_validator(mode="before")
    @classmethod
    def _theta_from_ray(cls, data):
        if isinstance(data, dict) and data.get("ray") is not None and data.get("theta") is None:
            x, y = data["ray"]
            data = {**data, "theta": math.atan2(y, x) % (2 * math.pi)}
        return data

    @model_validator(mode="after")
    def _check_radii(self):
        if self.r1 > self.r2:
            raise ValueError("内半径不能大于外半径")
        if self.ray == (0, 0):
            raise ValueError("终边方向不能为零向量")
        return self

    @property
    def area(self) -> float:
        return 0.5 * self.theta * (self.r2 ** 2 - self.r1 ** 2)

    def end_ray(self) -> Point:
        """终边方向的整数向量"""
        if self.ray is not None:
            return self.ray
        c = Fraction(math.cos(self.theta)).limit_denominator(RAY_DENOMINATOR)
        s = Fraction(math.sin(self.theta)).limit_denominator(RAY_DENOMINATOR)
        scale = math.lcm(c.denominator, s.denominator)
        return c.numerator * (scale // c.denominator), s.numerator * (scale // s.denominator)


def _disk_count(radius_sq: Fraction) -> int:
    p, q = radius_sq.numerator, radius_sq.denominator
    total = 0
    for x in range(-math.isqrt(p // q) - 1, math.isqrt(p // q) + 2):
        rest = p - q * x * x
        if rest < 0:
            continue
        total += 2 * (math.isqrt(rest * q) // q) + 1
    return total


def _angular_mask(K: Sector, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """0 ≤ arg z ≤ θ 的整数叉积判定，原点总在扇区内"""
    ex, ey = K.end_ray()
    if K.theta >= 2 * math.pi or (ey == 0 and ex > 0 and K.theta > math.pi):
        return np.ones(gx.shape, dtype=bool)
    # z × e ≥ 0：z 不在终边的逆时针一侧
    cross = gx.astype(object) * ey - gy.astype(object) * ex
    behind = np.array(cross >= 0, dtype=bool)
    if ey > 0 or (ey == 0 and ex > 0):
        return ((gy > 0) & behind) | ((gy == 0) & (gx >= 0))
    if ey == 0:
        return gy >= 0
    return ~((gy < 0) & ~behind)


def gauss_count(K: Union[Disk, Sector], lam: float) -> int:
    """
    Z² ∩ λK 的精确点数

    圆盘逐行用整数平方根计数；扇区在包围盒上做半径的有理数判定和极角的整数叉积判定。
    """
    if lam < 1:
        raise DomainError(f"λ={lam} 必须 ≥ 1")
    lam_q = _q(lam)
    if isinstance(K, Disk):
        return _disk_count((lam_q * _q(K.r)) ** 2)
    outer = (lam_q * _q(K.r2)) ** 2
    inner = (lam_q * _q(K.r1)) ** 2
    bound = math.isqrt(math.ceil(outer)) + 1
    axis = np.arange(-bound, bound + 1, dtype=np.int64)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    norm = gx * gx + gy * gy
    radial = (norm * outer.denominator <= outer.numerator) & (norm * inner.denominator >= inner.numerator)
    return int(np.count_nonzero(radial & _angular_mask(K, gx, gy)))


def gauss_deviation(lams: Iterable[float], K: Optional[Union[Disk, Sector]] = None) -> List[Dict]:
    """|#(Z² ∩ λK) − λ²|K|| 及其与 λ 的比值"""
    K = K or Disk(r=1.0)
    rows = []
    for lam in lams:
        count = gauss_count(K, lam)
        expected = lam ** 2 * K.area
        rows.append({"lambda": lam, "count": count, "area": expected,
                     "deviation": abs(count - expected), "ratio": abs(count - expected) / lam})
    return rows


# ---- 一维集合 S ----

class CountingQuery1D(BaseModel):
    """集合 S 的一次查询：k = a/λ 与 τ 固定，k₁ ∈ (1/λ)Z 遍历环形"""

    lam: float = Field(ge=1)
    N1: float
    N2: float = Field(ge=1)
    k: float = 0.0
    tau: float = 0.0
    w: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _check_scales(self):
        if not self.N1 > 2 * self.N2:
            raise ValueError(f"需要 N1 > 2·N2，当前 N1={self.N1}, N2={self.N2}")
        a = self.k * self.lam
        if abs(a - round(a)) > 1e-9:
            raise ValueError(f"k={self.k} 不在格点 (1/λ)Z 上")
        return self

    @property
    def k_index(self) -> int:
        return int(round(self.k * self.lam))


def _annulus_indices(lam: Fraction, scale: Fraction) -> np.ndarray:
    """|b| ∈ [λA/2, 2λA] 的全部整数 b"""
    low = math.ceil(lam * scale / 2)
    high = math.floor(2 * lam * scale)
    positive = np.arange(max(low, 0), high + 1, dtype=np.int64)
    return np.unique(np.concatenate([-positive, positive]))


def _allowed_b(a: int, lam: Fraction, n2: Fraction, pool: np.ndarray) -> np.ndarray:
    """pool 中满足 |a − b| ∈ [λN2/2, 2λN2] 的 b"""
    gap = np.abs(a - pool)
    scale = n2.denominator * lam.denominator
    return pool[
        (2 * gap * scale >= lam.numerator * n2.numerator)
        & (gap * scale <= 2 * lam.numerator * n2.numerator)
    ]


def enumerate_S_1d(q: CountingQuery1D) -> List[int]:
    """
    S = {k₁ ∈ (1/λ)Z : |k₁| ∼ N1, |k − k₁| ∼ N2, |k² − 2k₁(k − k₁) − τ| ≤ w}

    以 k = a/λ、k₁ = b/λ 写成整数形式 |a² − 2ab + 2b² − τλ²| ≤ wλ²。

    Returns:
        满足条件的 b（k₁ = b/λ），升序
    """
    lam, n1, n2 = _q(q.lam), _q(q.N1), _q(q.N2)
    a = q.k_index
    pool = _annulus_indices(lam, n1)
    b = _allowed_b(a, lam, n2, pool)
    centre = _q(q.tau) * lam ** 2
    half = _q(q.w) * lam ** 2
    low, high = math.ceil(centre - half), math.floor(centre + half)
    value = a * a - 2 * a * b + 2 * b * b
    return b[(value >= low) & (value <= high)].tolist()


def sup_count_1d(lam: float, N1: float, N2: float, w: float = 1.0) -> Dict:
    """
    sup_{k, τ} #S 的精确值

    对每个 a ≥ 0（(a, b) ↦ (−a, −b) 对称）把取值 V = a² − 2ab + 2b² 排序，
    用宽度 2wλ² 的滑动窗口求最大计数。

    Returns:
        {"count", "k", "tau"}，k、τ 为一个达到最大值的查询
    """
    CountingQuery1D(lam=lam, N1=N1, N2=N2, w=w)
    lam_q, n1, n2 = _q(lam), _q(N1), _q(N2)
    width = math.floor(2 * _q(w) * lam_q ** 2)
    pool = _annulus_indices(lam_q, n1)
    a_max = math.floor(2 * lam_q * (n1 + n2))
    best = {"count": 0, "k": 0.0, "tau": 0.0}
    for a in range(0, a_max + 1):
        b = _allowed_b(a, lam_q, n2, pool)
        if len(b) == 0:
            continue
        values = np.sort(a * a - 2 * a * b + 2 * b * b)
        counts = np.searchsorted(values, values + width, side="right") - np.arange(len(values))
        i = int(np.argmax(counts))
        if counts[i] > best["count"]:
            centre = Fraction(int(values[i])) + Fraction(width, 2)
            best = {"count": int(counts[i]), "k": a / lam, "tau": float(centre / lam_q ** 2)}
    return best


def bound_M_1d(lam: float, N1: float, N2: float, w: float = 1.0) -> Dict:
    """sup #S、对应的 M = (sup #S / λ)^{1/2} 与理论形状 1 + λ/N1、(1/N1 + 1/λ)^{1/2}"""
    best = sup_count_1d(lam, N1, N2, w)
    shape = 1.0 + lam / N1
    return {
        "lambda": lam, "N1": N1, "N2": N2, "k": best["k"], "tau": best["tau"], "count": best["count"],
        "count_ratio": best["count"] / shape,
        "M": math.sqrt(best["count"] / lam),
        "M_shape": math.sqrt(1.0 / N1 + 1.0 / lam),
    }


def sweep_S_1d(lams: Sequence[float], N1s: Sequence[float], N2s: Sequence[float], w: float = 1.0) -> List[Dict]:
    """在 (λ, N1, N2) 网格上计算 sup #S，跳过不满足 N1 > 2N2 的组合"""
    rows = []
    for lam in lams:
        for n1 in N1s:
            for n2 in N2s:
                if not n1 > 2 * n2:
                    continue
                rows.append(bound_M_1d(lam, n1, n2, w))
    return rows


# ---- 二维集合 A^λ ----

class CountingQuery2D(BaseModel):
    """A^λ 的一次查询：w = (a, b)，|w| ∼ N1"""

    lam: float = Field(ge=1)
    N1: float = Field(gt=0)
    N2: float = Field(gt=0)
    a: float
    b: float
    c: float = Field(default=1.0, gt=0)
    k2: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _check_w(self):
        norm_sq = _q(self.a) ** 2 + _q(self.b) ** 2
        n1 = _q(self.N1)
        if not n1 ** 2 / 4 <= norm_sq <= 4 * n1 ** 2:
            raise ValueError(f"|w| 必须满足 N1/2 ≤ |w| ≤ 2N1，当前 w=({self.a}, {self.b})")
        return self


def _a_lambda_points(q: CountingQuery2D) -> Tuple[np.ndarray, np.ndarray, int]:
    """A^λ 的整数点（λN2/2 ≤ |l| ≤ k₂λN2）及其圆键 D·(x² + y² + 2λ(ax + by))"""
    lam = _q(q.lam)
    lin_a, lin_b = 2 * lam * _q(q.a), 2 * lam * _q(q.b)
    window = _q(q.c) * lam ** 2
    radius_sq = (_q(q.k2) * lam * _q(q.N2)) ** 2
    inner_sq = (lam * _q(q.N2) / 2) ** 2
    den = math.lcm(lin_a.denominator, lin_b.denominator, window.denominator, radius_sq.denominator, inner_sq.denominator)
    bound = math.isqrt(math.floor(radius_sq))
    axis = np.arange(-bound, bound + 1, dtype=np.int64)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    x, y = gx.ravel(), gy.ravel()
    norm = x * x + y * y
    in_disk = (norm * den <= int(radius_sq * den)) & (norm * den >= int(inner_sq * den))
    key = den * norm + int(lin_a * den) * x + int(lin_b * den) * y
    inside = in_disk & (np.abs(key) <= int(window * den))
    return np.stack([x[inside], y[inside]], axis=1), key[inside], den


def enumerate_A_lambda_2d(q: CountingQuery2D) -> int:
    """
    #{(x, y) ∈ Z² : |x² + y² + 2λ(ax + by)| ≤ cλ², λN2/2 ≤ |(x, y)| ≤ k₂λN2}

    系数通分后全部用整数比较。
    """
    points, _, _ = _a_lambda_points(q)
    return int(len(points))


def max_circle_points_2d(q: CountingQuery2D) -> int:
    """A^λ 中落在同一圆 C_n^λ（圆心 (−λa, −λb)）上的最多点数"""
    _, key, _ = _a_lambda_points(q)
    if len(key) == 0:
        return 0
    _, counts = np.unique(key, return_counts=True)
    return int(counts.max())


def sweep_A_lambda_2d(
    lams: Sequence[float],
    N1s: Sequence[float],
    N2s: Sequence[float],
    directions: int = 8,
    magnitudes: Sequence[float] = (1.0,),
    c: float = 1.0,
    k2: float = 1.0,
) -> List[Dict]:
    """
    在 (λ, N1, N2) 网格和 w 的方向/模长上计算 #A^λ 与单圆最多点数

    w = |w|·(cos θ, sin θ)，分量取 6 位小数后按字面转为有理数。
    """
    rows = []
    for lam in lams:
        for n1 in N1s:
            for n2 in N2s:
                for scale in magnitudes:
                    for j in range(directions):
                        theta = 2 * math.pi * j / directions
                        a = round(scale * n1 * math.cos(theta), 6)
                        b = round(scale * n1 * math.sin(theta), 6)
                        q = CountingQuery2D(lam=lam, N1=n1, N2=n2, a=a, b=b, c=c, k2=k2)
                        rows.append({
                            "lambda": lam, "N1": n1, "N2": n2, "a": a, "b": b, "c": c,
                            "count": enumerate_A_lambda_2d(q),
                            "circle_max": max_circle_points_2d(q),
                            "shape_b": lam + lam ** 2 * n2 / n1,
                        })
    return rows


def sup_count_M(queries: Sequence[Union[CountingQuery1D, CountingQuery2D]]) -> float:
    """
    (λ^{-d} · max #)^{1/2}，最大值取遍给定查询

    一维查询计 #S，二维查询计 #A^λ；所有查询须共享同一 λ。
    """
    if not queries:
        raise DomainError("空的查询族")
    lams = {q.lam for q in queries}
    if len(lams) != 1:
        raise DomainError(f"查询族的 λ 不一致: {sorted(lams)}")
    d = 2 if isinstance(queries[0], CountingQuery2D) else 1
    counts = [
        enumerate_A_lambda_2d(q) if isinstance(q, CountingQuery2D) else len(enumerate_S_1d(q))
        for q in queries
    ]
    return math.sqrt(max(counts) / queries[0].lam ** d)
