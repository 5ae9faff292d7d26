"""
对数-对数斜率拟合
"""
from typing import Dict, Sequence

import numpy as np
from loguru import logger
from scipy import stats

MIN_POINTS = 3


def loglog_slope(quantity: str, x: Sequence[float], y: Sequence[float]) -> Dict:
    """
    log y ~ slope·log x 的最小二乘拟合及 95% 置信区间

    非正或非有限的点被剔除；剩余点少于 3 个或 x 只有一个取值时斜率未定义。

    Args:
        quantity: 被拟合量的名称
        x: 自变量（如 N）
        y: 因变量（如漂移）

    Returns:
        一行结果：quantity, slope, ci_low, ci_high, points, flag
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    lx, ly = np.log(x[keep]), np.log(y[keep])
    row = {"quantity": quantity, "slope": np.nan, "ci_low": np.nan, "ci_high": np.nan, "points": int(keep.sum()), "flag": ""}

    if row["points"] < MIN_POINTS or len(np.unique(lx)) < 2:
        row["flag"] = "undefined"
        logger.warning(f"{quantity} 的斜率未定义：有效点数 {row['points']}")
        return row

    fit = stats.linregress(lx, ly)
    half = stats.t.ppf(0.975, row["points"] - 2) * fit.stderr
    row.update(slope=float(fit.slope), ci_low=float(fit.slope - half), ci_high=float(fit.slope + half), flag="ok")
    logger.info(f"{quantity} 斜率 = {fit.slope:.3f} ∈ [{row['ci_low']:.3f}, {row['ci_high']:.3f}]")
    return row
