import math
import pytest
from fractions import Fraction
from pathlib import Path
import sys

import numpy as np
from pydantic import ValidationError

# 添加项目根目录到Python路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.core.exceptions import DomainError
from app.core.lattice_counting import (
    CountingQuery1D,
    CountingQuery2D,
    Disk,
    LatticePolygon,
    Sector,
    arc_lattice_points,
    arc_lemma_violations,
    bound_M_1d,
    enumerate_A_lambda_2d,
    enumerate_S_1d,
    gauss_count,
    gauss_deviation,
    is_simple_polygon,
    max_circle_points_2d,
    pick_area,
    pick_counts,
    random_lattice_polygon,
    shoelace_area,
    sup_count_1d,
    sup_count_M,
    sweep_A_lambda_2d,
    sweep_S_1d,
)


def test_pick_square():
    square = LatticePolygon(((0, 0), (2, 0), (2, 2), (0, 2)))
    assert pick_counts(square) == (1, 8)
    assert pick_area(square) == (Fraction(4), Fraction(4))


def test_pick_triangle():
    """直角边 4、3 的三角形：E = 8，I = 3"""
    triangle = LatticePolygon(((0, 0), (4, 0), (0, 3)))
    assert pick_counts(triangle) == (3, 8)
    assert shoelace_area(triangle) == 6


def test_polygon_orientation_and_validity():
    clockwise = LatticePolygon(((0, 0), (0, 2), (2, 2), (2, 0)))
    assert shoelace_area(clockwise) == 4
    assert not is_simple_polygon([(0, 0), (2, 2), (2, 0), (0, 2)])
    with pytest.raises(DomainError):
        LatticePolygon(((0, 0), (2, 2), (2, 0), (0, 2)))
    with pytest.raises(DomainError):
        LatticePolygon(((0, 0), (1, 1)))


def test_pick_random_polygons():
    """随机简单多边形上 Pick 面积与鞋带面积精确相等"""
    rng = np.random.default_rng(0)
    for _ in range(20):
        via_pick, via_shoelace = pick_area(random_lattice_polygon(rng))
        assert via_pick == via_shoelace


def test_circle_lattice_points():
    points = arc_lattice_points(25)
    assert len(points) == 12
    assert all(x * x + y * y == 25 for x, y in points)
    quarter = arc_lattice_points(25, arc=(0.0, math.pi / 2))
    assert quarter == [(5, 0), (4, 3), (3, 4), (0, 5)]


def test_rational_center():
    """圆心 (1/2, 1/2)、R² = 1/2 的圆恰过单位正方形的四个顶点"""
    points = arc_lattice_points("1/2", center=("1/2", "1/2"))
    assert sorted(points) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    with pytest.raises(DomainError):
        arc_lattice_points(0)


def test_arc_lemma():
    result = arc_lemma_violations(2000)
    assert result["violation_count"] == 0
    assert result["min_ratio"] >= 1.0
    assert result["circles"] > 0


def test_gauss_disk():
    assert gauss_count(Disk(r=1.0), 1.0) == 5
    assert gauss_count(Disk(r=1.0), 2.0) == 13
    assert gauss_count(Disk(r=1.0), 4.0) == 49
    with pytest.raises(DomainError):
        gauss_count(Disk(r=1.0), 0.5)


def test_gauss_sector():
    assert gauss_count(Sector(r1=0.0, r2=1.0, theta=2 * math.pi), 1.0) == 5
    assert gauss_count(Sector(r1=0.0, r2=1.0, theta=math.pi / 2), 1.0) == 3
    with pytest.raises(ValidationError):
        Sector(r1=2.0, r2=1.0, theta=1.0)
    with pytest.raises(ValidationError):
        Sector(r1=0.0, r2=1.0, ray=(0, 0))


def test_gauss_sector_boundary_rays():
    """终边上的格点按整数叉积精确计入"""
    assert gauss_count(Sector(r1=0.0, r2=1.0, theta=0.0), 1.0) == 2
    assert gauss_count(Sector(r1=0.0, r2=1.0, theta=math.pi), 1.0) == 4
    assert gauss_count(Sector(r1=0.0, r2=1.0, theta=1.5 * math.pi), 1.0) == 5
    assert gauss_count(Sector(r1=0.0, r2=1.0, theta=math.nextafter(2 * math.pi, 0.0)), 1.0) == 5
    assert gauss_count(Sector(r1=0.0, r2=2.0, theta=math.pi / 2), 1.0) == 6
    ray = Sector(r1=0.0, r2=3.0, ray=(2, 1))
    assert ray.theta == pytest.approx(math.atan2(1, 2))
    assert gauss_count(ray, 1.0) == 5
    assert gauss_count(Sector(r1=0.0, r2=3.0, ray=(-2, -1)), 1.0) == 19


def test_gauss_deviation():
    rows = gauss_deviation([1.0, 2.0])
    assert rows[0]["count"] == 5
    assert rows[1]["deviation"] == pytest.approx(abs(13 - 4 * math.pi))


def test_query_1d_validation():
    with pytest.raises(ValidationError):
        CountingQuery1D(lam=2.0, N1=4.0, N2=2.0)
    with pytest.raises(ValidationError):
        CountingQuery1D(lam=2.0, N1=8.0, N2=2.0, k=0.3)


def _s_oracle(lam, N1, N2, k, tau, w):
    lam, N1, N2, k, tau, w = (Fraction(x) for x in (lam, N1, N2, k, tau, w))
    found = []
    for b in range(-100, 101):
        k1 = Fraction(b) / lam
        if not (N1 / 2 <= abs(k1) <= 2 * N1 and N2 / 2 <= abs(k - k1) <= 2 * N2):
            continue
        if abs(k * k - 2 * k1 * (k - k1) - tau) <= w:
            found.append(b)
    return found


def test_enumerate_S_matches_oracle():
    q = CountingQuery1D(lam=2.0, N1=8.0, N2=2.0, k=8.0, tau=40.0, w=4.0)
    assert enumerate_S_1d(q) == _s_oracle(2, 8, 2, 8, 40, 4) == [11, 12]


def test_sup_count_1d_is_attained():
    best = sup_count_1d(2.0, 8.0, 2.0)
    q = CountingQuery1D(lam=2.0, N1=8.0, N2=2.0, k=best["k"], tau=best["tau"])
    assert len(enumerate_S_1d(q)) == best["count"] > 0
    row = bound_M_1d(2.0, 8.0, 2.0)
    assert row["M"] == pytest.approx(math.sqrt(best["count"] / 2.0))


def test_sweep_S_skips_invalid_scales():
    rows = sweep_S_1d([2.0], [8.0, 4.0], [2.0])
    assert len(rows) == 1 and rows[0]["N1"] == 8.0


def _a_oracle(lam, N2, a, b, c=1, k2=1):
    lam, N2, a, b, c, k2 = (Fraction(str(x)) for x in (lam, N2, a, b, c, k2))
    count = 0
    for x in range(-20, 21):
        for y in range(-20, 21):
            norm = x * x + y * y
            if not (lam * N2 / 2) ** 2 <= norm <= (k2 * lam * N2) ** 2:
                continue
            if abs(norm + 2 * lam * (a * x + b * y)) <= c * lam ** 2:
                count += 1
    return count


@pytest.mark.parametrize("a, b", [(1.5, -0.5), (1.3, -0.9), (0.0, 2.0)])
def test_enumerate_A_matches_oracle(a, b):
    q = CountingQuery2D(lam=2.0, N1=2.0, N2=1.0, a=a, b=b)
    assert enumerate_A_lambda_2d(q) == _a_oracle(2, 1, a, b)
    assert max_circle_points_2d(q) <= enumerate_A_lambda_2d(q)


def test_query_2d_validation():
    with pytest.raises(ValidationError):
        CountingQuery2D(lam=2.0, N1=2.0, N2=1.0, a=0.1, b=0.1)


def test_sup_count_M():
    q = CountingQuery2D(lam=2.0, N1=2.0, N2=1.0, a=1.5, b=-0.5)
    assert sup_count_M([q]) == pytest.approx(math.sqrt(enumerate_A_lambda_2d(q) / 4.0))
    with pytest.raises(DomainError):
        sup_count_M([])
    with pytest.raises(DomainError):
        sup_count_M([q, CountingQuery2D(lam=3.0, N1=2.0, N2=1.0, a=1.5, b=-0.5)])


def test_sweep_A_lambda():
    rows = sweep_A_lambda_2d([2.0], [2.0], [1.0], directions=4)
    assert len(rows) == 4
    assert all(row["circle_max"] <= row["count"] for row in rows)
