"""
逐格 Romberg 積分：複合梯形 + Richardson 外插，對所有網格格同時向量化。

積分函式須接受任意形狀的 ndarray 並逐點回傳；遇到非有限值直接拒絕並回報位置。
"""
from __future__ import annotations

from typing import Annotated, Callable

import numpy as np
from scipy.integrate import trapezoid

from utils.errors import ModelValidationError, NumericalConvergenceError

DEFAULT_RTOL = 1e-10
DEFAULT_ABS_FLOOR = 1e-14
MIN_LEVELS = 3
MAX_LEVELS = 10


def _checked(func: Callable[[np.ndarray], np.ndarray], x: np.ndarray, label: str) -> np.ndarray:
    with np.errstate(all="ignore"):
        values = np.asarray(func(x), dtype=float)
    values = np.broadcast_to(values, x.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        offending = float(x.flat[int(np.argmax(bad))])
        raise ModelValidationError(f"{label} 的被積函數在 r={offending} 非有限", offending_r=offending)
    return values


def romberg_cells(
    func: Annotated[Callable[[np.ndarray], np.ndarray], "向量化被積函數"],
    a: Annotated[np.ndarray, "各格左端點"],
    b: Annotated[np.ndarray, "各格右端點"],
    rtol: float = DEFAULT_RTOL,
    abs_floor: Annotated[float, "絕對容許值 = abs_floor × 格寬"] = DEFAULT_ABS_FLOOR,
    min_levels: int = MIN_LEVELS,
    max_levels: int = MAX_LEVELS,
    label: str = "quadrature",
) -> np.ndarray:
    """
    對每一格 [a_i, b_i] 做 Romberg 積分。

    Args:
        func: 被積函數。
        a, b: 同長度的端點陣列。
        rtol: 相對容許值。
        abs_floor: 絕對容許值係數（乘上格寬），避免被積函數近零時永不收斂。
        min_levels: 至少做的 Richardson 層數。
        max_levels: 最多細分層數（每格最多 2^max_levels 個子區間）。
        label: 錯誤訊息用的名稱。

    Returns:
        各格積分值。

    Raises:
        ModelValidationError: 被積函數非有限（附上 r）。
        NumericalConvergenceError: 達 max_levels 仍未收斂（附上最大誤差估計）。
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    h = b - a
    n = a.size
    if n == 0:
        return np.zeros(0)

    trap = 0.5 * h * (_checked(func, a, label) + _checked(func, b, label))
    result = trap.copy()
    prev = trap[:, None]
    active = np.arange(n)

    for level in range(1, max_levels + 1):
        m = 2 ** (level - 1)
        step = h[active] / (2 * m)
        pts = a[active, None] + (2 * np.arange(m) + 1)[None, :] * step[:, None]
        trap_a = 0.5 * trap[active] + step * _checked(func, pts, label).sum(axis=1)
        trap[active] = trap_a

        row = [trap_a]
        for j in range(1, level + 1):
            row.append(row[j - 1] + (row[j - 1] - prev[:, j - 1]) / (4**j - 1))
        row = np.stack(row, axis=1)

        best = row[:, -1]
        error = np.abs(best - prev[:, -1])
        result[active] = best
        if level + 1 >= min_levels:
            done = error <= np.maximum(rtol * np.abs(best), abs_floor * h[active])
        else:
            done = np.zeros(active.size, dtype=bool)
        active = active[~done]
        prev = row[~done]
        if active.size == 0:
            return result

    worst = float(np.max(error[~done]))
    raise NumericalConvergenceError(
        f"{label}：{active.size} 格在 {max_levels} 層 Romberg 後仍未收斂（最大誤差估計 {worst:.3e}）",
        achieved_tol=worst,
    )


def cumulative_integral(
    func: Callable[[np.ndarray], np.ndarray],
    nodes: Annotated[np.ndarray, "遞增節點，積分由 nodes[0] 起算"],
    **kwargs,
) -> np.ndarray:
    """∫_{nodes[0]}^{nodes[i]} func，回傳與 nodes 同長度的陣列（第一個為 0）。"""
    nodes = np.asarray(nodes, dtype=float)
    cells = romberg_cells(func, nodes[:-1], nodes[1:], **kwargs)
    return np.concatenate([[0.0], np.cumsum(cells)])


def richardson_trapezoid(values: np.ndarray, nodes: np.ndarray, coarse: np.ndarray) -> tuple:
    """
    全網格與粗網格（coarse 索引）梯形值的 Richardson 組合。

    Returns:
        (extrapolated, fine, coarse_value)。
    """
    fine = float(trapezoid(values, nodes))
    rough = float(trapezoid(values[coarse], nodes[coarse]))
    return (4.0 * fine - rough) / 3.0, fine, rough
