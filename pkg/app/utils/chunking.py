"""
指标块分块工具
把多个候选集合的笛卡尔积按混合进制切成固定大小的块，便于向量化与并行
"""
from typing import List, Sequence, Tuple

import numpy as np


def product_size(sizes: Sequence[int]) -> int:
    total = 1
    for size in sizes:
        total *= int(size)
    return total


def block_ranges(total: int, chunk: int) -> List[Tuple[int, int]]:
    """把 [0, total) 切成长度不超过 chunk 的区间"""
    if chunk <= 0:
        raise ValueError("chunk 必须为正")
    return [(start, min(start + chunk, total)) for start in range(0, total, chunk)]


def mixed_radix_digits(start: int, stop: int, sizes: Sequence[int]) -> np.ndarray:
    """
    线性序号 [start, stop) 的混合进制展开

    Args:
        start: 起始序号
        stop: 终止序号（不含）
        sizes: 各位的进制，最后一位变化最快

    Returns:
        形状为 (stop-start, len(sizes)) 的整数数组
    """
    idx = np.arange(start, stop, dtype=np.int64)
    digits = np.empty((len(idx), len(sizes)), dtype=np.int64)
    for j in range(len(sizes) - 1, -1, -1):
        digits[:, j] = idx % sizes[j]
        idx //= sizes[j]
    return digits

