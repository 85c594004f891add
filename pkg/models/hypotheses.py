"""
係數條件的網格檢查。

係數條件要求：σ(r) ≥ ε 對所有 r；g(r) = 2rb(r)/σ(r)² ≥ ε 對「夠大」的 r；
且 e^{−ε′r}f(r) → 0。極限條件在有限網格上以「尾段單調不增且末值低於容許值」代替。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Annotated, Optional, Tuple

import numpy as np

from models.coefficients import COEFFICIENT_NAMES, CoefficientSet
from models.radial_grid import RadialGrid
from utils.errors import ModelValidationError
from utils.logger import logger

DEFAULT_CHECK_R_MAX = 50.0
DEFAULT_CHECK_NODES = 4096
DEFAULT_F_TAIL_TOL = 1e-6

REASON_SIGMA = "sigma_below_epsilon"
REASON_G_TAIL = "g_tail_below_epsilon"
REASON_F_TAIL = "f_tail_not_vanishing"


@dataclass(frozen=True)
class HypothesisReport:
    """
    係數條件檢查結果。

    Note:
        passed 只由三個網格條件決定；ε′ < βε/2 在 CoefficientSet 建構時即已強制。
    """

    sigma_min: float
    g_tail_min: float
    tail_start_r0: float
    tail_end: float
    f_tail_ok: bool
    f_tail_final: float
    passed: bool
    epsilon_checked: float
    epsilon_suggestion: float
    reasons: Tuple[str, ...]
    grid_used: dict
    tail_nodes: np.ndarray = field(repr=False, compare=False)
    g_tail: np.ndarray = field(repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "reasons": list(self.reasons),
            "epsilon_checked": float(self.epsilon_checked),
            "epsilon_suggestion": float(self.epsilon_suggestion),
            "sigma_min": float(self.sigma_min),
            "g_tail_min": float(self.g_tail_min),
            "tail_start_r0": float(self.tail_start_r0),
            "tail_end": float(self.tail_end),
            "f_tail_ok": bool(self.f_tail_ok),
            "f_tail_final": float(self.f_tail_final),
            "grid_used": dict(self.grid_used),
        }


def default_check_grid(coeffs: CoefficientSet) -> RadialGrid:
    """模型記錄的檢查網格（內建模型可能已延伸 r_max），否則 [0, 50]、4096 節點。"""
    r_max = coeffs.check_r_max or DEFAULT_CHECK_R_MAX
    if coeffs.tail_start is not None:
        r_max = max(r_max, 10.0 * coeffs.tail_start)
    return RadialGrid(r_max=r_max, n_nodes=DEFAULT_CHECK_NODES)


def resolve_tail_window(
    coeffs: CoefficientSet,
    grid: RadialGrid,
    tail_window: Optional[Tuple[float, float]] = None,
) -> Tuple[float, float]:
    """尾段區間：明確給定 > 模型 tail_start > [r_max/10, r_max]。"""
    if tail_window is not None:
        start, end = float(tail_window[0]), float(tail_window[1])
    elif coeffs.tail_start is not None:
        start, end = float(coeffs.tail_start), grid.r_max
    else:
        start, end = grid.r_max / 10.0, grid.r_max
    if not (0 < start < end <= grid.r_max):
        raise ModelValidationError(f"尾段區間 [{start}, {end}] 須落在 (0, r_max={grid.r_max}] 內")
    if grid.r_max < 10.0 * start:
        raise ModelValidationError(
            f"網格 r_max={grid.r_max} 須至少為尾段起點 {start} 的 10 倍"
        )
    return start, end


def _ensure_finite(coeffs: CoefficientSet, r: np.ndarray) -> dict:
    values = {}
    for name in COEFFICIENT_NAMES:
        vals = coeffs.evaluate(name, r)
        bad = ~np.isfinite(vals)
        if bad.any():
            offending = float(r[np.argmax(bad)])
            raise ModelValidationError(
                f"係數 {name} 在 r={offending} 的值非有限", offending_r=offending
            )
        values[name] = vals
    return values


def tail_profile(
    coeffs: CoefficientSet,
    grid: RadialGrid,
    tail_window: Tuple[float, float],
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    在網格上計算 σ 全域最小值與尾段 g 值。

    Returns:
        (sigma_min, tail_nodes, g_tail)。
    """
    r = grid.nodes
    values = _ensure_finite(coeffs, r)
    start, end = tail_window
    mask = (r >= start) & (r <= end)
    tail_nodes = r[mask]
    with np.errstate(all="ignore"):
        g_tail = 2.0 * tail_nodes * values["b"][mask] / values["sigma"][mask] ** 2
    return float(values["sigma"].min()), tail_nodes, g_tail


def check_hypotheses(
    coeffs: CoefficientSet,
    grid: Annotated[Optional[RadialGrid], "檢查網格；None 時用模型記錄的網格或 [0, 50]"] = None,
    tail_window: Annotated[Optional[Tuple[float, float]], "「r 夠大」的區間"] = None,
    f_tail_tol: Annotated[float, "e^{−ε′r}f(r) 尾端末值的容許上限"] = DEFAULT_F_TAIL_TOL,
) -> HypothesisReport:
    """
    在網格上數值驗證係數條件。

    Args:
        coeffs: 待檢查的係數集合。
        grid: 徑向網格，r_max 須至少為尾段起點的 10 倍。
        tail_window: 尾段區間；未給時取 coeffs.tail_start 或 [r_max/10, r_max]。
        f_tail_tol: 極限條件的替代容許值。

    Returns:
        HypothesisReport；epsilon_suggestion = min(σ_min, g_tail_min) 為可通過前兩條的最大 ε。

    Raises:
        ModelValidationError: 係數在某節點非有限（附上該 r）、或網格不滿足前置條件。
    """
    grid = grid or default_check_grid(coeffs)
    start, end = resolve_tail_window(coeffs, grid, tail_window)
    sigma_min, tail_nodes, g_tail = tail_profile(coeffs, grid, (start, end))
    g_tail_min = float(np.min(g_tail)) if g_tail.size else float("-inf")

    f_tail = np.exp(-coeffs.epsilon_prime * tail_nodes) * np.abs(coeffs.evaluate("f", tail_nodes))
    steps = np.diff(f_tail)
    monotone = bool(np.all(steps <= 1e-12 * np.abs(f_tail[:-1])))
    f_final = float(f_tail[-1]) if f_tail.size else float("inf")
    f_tail_ok = monotone and f_final < f_tail_tol

    reasons = []
    if not sigma_min >= coeffs.epsilon:
        reasons.append(REASON_SIGMA)
    if not g_tail_min >= coeffs.epsilon:
        reasons.append(REASON_G_TAIL)
    if not f_tail_ok:
        reasons.append(REASON_F_TAIL)

    report = HypothesisReport(
        sigma_min=sigma_min,
        g_tail_min=g_tail_min,
        tail_start_r0=start,
        tail_end=end,
        f_tail_ok=f_tail_ok,
        f_tail_final=f_final,
        passed=not reasons,
        epsilon_checked=float(coeffs.epsilon),
        epsilon_suggestion=min(sigma_min, g_tail_min),
        reasons=tuple(reasons),
        grid_used=grid.describe(),
        tail_nodes=tail_nodes,
        g_tail=g_tail,
    )
    if report.passed:
        logger.info(
            f"係數條件通過：model={coeffs.name}, σ_min={sigma_min:.6g}, g_tail_min={g_tail_min:.6g}, "
            f"tail=[{start:.4g}, {end:.4g}]"
        )
    else:
        logger.warning(f"係數條件未通過：model={coeffs.name}, reasons={list(reasons)}")
    return report
