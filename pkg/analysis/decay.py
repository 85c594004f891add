"""
ℓ = 0 扇區的 Fokker–Planck 演化與衰減率量測。

相對密度 h = dν̃/dν 滿足 ∂_t h = 𝓛h（𝓛 對 ν 自伴），質量形式
    (M + θ·dt·K) h^{n+1} = (M − (1−θ)·dt·K) h^n
以 Crank–Nicolson（θ = 1/2）推進，第一步改為兩個 dt/2 的後向 Euler（Rannacher 起步）。
K 的列和為 0，故 Σ m h 逐步守恆。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Annotated, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import solveh_banded

from analysis.generator import RadialOperator
from analysis.poincare import PoincareBound
from equilibrium.measure import EquilibriumMeasure
from utils.errors import ModelValidationError, NumericalConvergenceError
from utils.logger import logger

MASS_TOL = 1e-8
NEGATIVITY_TOL = 1e-10
DEFAULT_WINDOW = (1e-6, 1e-1)
DEFAULT_RATE_TOL = 0.02
MIN_FIT_POINTS = 3
MIN_CHECKPOINTS = 5


@dataclass(frozen=True)
class DensityEvolution:
    """檢查點上的相對密度；densities[k] 對應 times[k]。"""

    op: RadialOperator = field(repr=False)
    times: np.ndarray
    densities: np.ndarray = field(repr=False)
    masses: np.ndarray
    dt: float


def gaussian_bump(
    op0: RadialOperator,
    center: Annotated[float, "峰值半徑"] = 0.0,
    width: Annotated[float, "寬度 > 0"] = 1.0,
) -> np.ndarray:
    """旋轉對稱的初始相對密度 h ∝ exp(−(r − center)²/(2·width²))，Σ m h = 1。"""
    if width <= 0:
        raise ModelValidationError(f"width 須為正，收到 {width}")
    h = np.exp(-((op0.nodes - center) ** 2) / (2.0 * width**2))
    return h / float(np.sum(op0.masses * h))


def _stiffness_times(op: RadialOperator, h: np.ndarray) -> np.ndarray:
    out = op.stiffness_diagonal * h
    out[:-1] += op.stiffness_offdiagonal * h[1:]
    out[1:] += op.stiffness_offdiagonal * h[:-1]
    return out


def _implicit_matrix(op: RadialOperator, coef: float) -> np.ndarray:
    """M + coef·K 的上帶狀儲存（solveh_banded 格式）。"""
    ab = np.zeros((2, op.size))
    ab[0, 1:] = coef * op.stiffness_offdiagonal
    ab[1] = op.masses + coef * op.stiffness_diagonal
    return ab


def evolve_density(
    op0: Annotated[RadialOperator, "ℓ = 0 的算子"],
    h0: Annotated[np.ndarray, "初始相對密度，Σ m h0 = 1"],
    t_end: Annotated[float, "終止時間"],
    dt: Annotated[float, "時間步長"],
    checkpoints: Annotated[Optional[Sequence[float]], "輸出時間；None 時取 0 到 t_end 的 21 個等距點"] = None,
) -> DensityEvolution:
    """
    以 Crank–Nicolson 推進 h_t = e^{t𝓛}h0。

    Raises:
        ModelValidationError: 扇區不是 0、h0 形狀不符、為負或質量不為 1。
        NumericalConvergenceError: 出現超過容許值的負值（建議縮小 dt），或質量漂移。
    """
    if op0.sector != 0:
        raise ModelValidationError(f"密度演化只在 ℓ = 0 扇區進行，收到 ℓ={op0.sector}")
    h = np.array(h0, dtype=float)
    if h.shape != (op0.size,):
        raise ModelValidationError(f"h0 形狀 {h.shape} 與網格節點數 {op0.size} 不符")
    if np.any(h < 0) or not np.all(np.isfinite(h)):
        raise ModelValidationError("h0 須為非負有限值")
    mass0 = float(np.sum(op0.masses * h))
    if abs(mass0 - 1.0) > MASS_TOL:
        raise ModelValidationError(f"∫h0 dν = {mass0:.12g}，與 1 相差超過 {MASS_TOL:g}")
    if not (dt > 0 and t_end > 0):
        raise ModelValidationError(f"dt 與 t_end 須為正，收到 dt={dt}, t_end={t_end}")

    n_steps = int(np.rint(t_end / dt))
    times = np.linspace(0.0, t_end, 21) if checkpoints is None else np.asarray(checkpoints, dtype=float)
    steps = np.clip(np.rint(times / dt).astype(int), 0, n_steps)

    half = _implicit_matrix(op0, 0.5 * dt)
    out = np.empty((steps.size, op0.size))
    masses = np.empty(steps.size)
    for k in np.flatnonzero(steps == 0):
        out[k], masses[k] = h, mass0

    for n in range(1, n_steps + 1):
        if n == 1:
            h = solveh_banded(half, op0.masses * h)
            h = solveh_banded(half, op0.masses * h)
        else:
            h = solveh_banded(half, op0.masses * h - 0.5 * dt * _stiffness_times(op0, h))
        low = float(h.min())
        if low < -NEGATIVITY_TOL:
            raise NumericalConvergenceError(
                f"第 {n} 步密度出現負值 {low:.3e}；dt={dt:g} 對此網格過大，建議 dt ≤ {dt / 4:g}",
                achieved_tol=abs(low),
            )
        hit = np.flatnonzero(steps == n)
        if hit.size:
            mass = float(np.sum(op0.masses * h))
            if abs(mass - 1.0) > MASS_TOL * max(1.0, n * dt):
                raise NumericalConvergenceError(f"t={n * dt:g} 質量漂移 {mass - 1.0:.3e}", achieved_tol=abs(mass - 1.0))
            out[hit], masses[hit] = h, mass

    logger.info(f"密度演化完成：model={op0.coeffs.name}, steps={n_steps}, dt={dt:g}, checkpoints={steps.size}")
    return DensityEvolution(op=op0, times=steps * dt, densities=out, masses=masses, dt=float(dt))


def fit_decay_rate(
    times: np.ndarray,
    distances: np.ndarray,
    window: Tuple[float, float] = DEFAULT_WINDOW,
) -> Tuple[float, int]:
    """
    對 distance ∈ [lo, hi]·distance[0] 的點做 log-線性最小平方。

    Returns:
        (rate, 使用點數)；點數不足時 rate 為 nan。
    """
    times = np.asarray(times, dtype=float)
    distances = np.asarray(distances, dtype=float)
    lo, hi = window
    start = distances[0]
    mask = (distances >= lo * start) & (distances <= hi * start) & (distances > 0)
    count = int(mask.sum())
    if start <= 0 or count < MIN_FIT_POINTS:
        return float("nan"), count
    slope, _ = np.polyfit(times[mask], np.log(distances[mask]), 1)
    return float(-slope), count


@dataclass(frozen=True)
class DecayReport:
    """
    衰減量測結果。

    Attributes:
        flagged: 找不到乾淨的指數區段（任一距離的擬合點數不足）。
        l2_bound_ok: ‖h_t − 1‖ ≤ e^{−t/(2c₂)}‖h₀ − 1‖ 在所有檢查點成立（未給 c₂ 時為 None）。
        tv_bound_ok: ‖h_t − 1‖_{L¹} ≤ e^{−t/(2c₂)}‖h₀ − 1‖_{L²}。
        rate_ok: 兩個擬合率都 ≥ 1/(2c₂)(1 − tol)；flagged 或無 c₂ 時為 None。
    """

    times: np.ndarray
    l2_distances: np.ndarray
    tv_distances: np.ndarray
    fitted_rate_l2: float
    fitted_rate_tv: float
    window: Tuple[float, float]
    flagged: bool
    monotone: bool
    c2: Optional[float] = None
    l2_bound_ok: Optional[bool] = None
    tv_bound_ok: Optional[bool] = None
    rate_ok: Optional[bool] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "l2": self.l2_distances, "tv": self.tv_distances})

    def summary(self) -> dict:
        return {
            "fitted_rate_l2": self.fitted_rate_l2,
            "fitted_rate_tv": self.fitted_rate_tv,
            "window": list(self.window),
            "flagged": self.flagged,
            "monotone": self.monotone,
            "c2": self.c2,
            "l2_bound_ok": self.l2_bound_ok,
            "tv_bound_ok": self.tv_bound_ok,
            "rate_ok": self.rate_ok,
        }


def decay_report(
    evolution: DensityEvolution,
    measure: EquilibriumMeasure,
    bound: Annotated[Optional[PoincareBound], "Poincaré 證書；None 時不檢查上界"] = None,
    window: Tuple[float, float] = DEFAULT_WINDOW,
    rate_tol: float = DEFAULT_RATE_TOL,
) -> DecayReport:
    """
    計算 L²(ν) 與 L¹(ν) 距離並擬合衰減率。

    Raises:
        ModelValidationError: 檢查點少於 5 個，或 measure 與演化所用模型不符。
    """
    if evolution.times.size < MIN_CHECKPOINTS:
        raise ModelValidationError(f"至少需要 {MIN_CHECKPOINTS} 個檢查點，收到 {evolution.times.size}")
    if measure.coeffs != evolution.op.coeffs:
        raise ModelValidationError("measure 與密度演化使用的模型不同")

    m = evolution.op.masses
    excess = evolution.densities - 1.0
    l2 = np.sqrt(np.sum(m * excess**2, axis=1))
    tv = np.sum(m * np.abs(excess), axis=1)
    times = evolution.times
    rate_l2, n_l2 = fit_decay_rate(times, l2, window)
    rate_tv, n_tv = fit_decay_rate(times, tv, window)
    flagged = n_l2 < MIN_FIT_POINTS or n_tv < MIN_FIT_POINTS
    monotone = bool(np.all(np.diff(l2) <= 1e-12 * max(l2[0], 1.0)))

    c2 = l2_ok = tv_ok = rate_ok = None
    if bound is not None:
        c2 = bound.c2
        envelope = np.exp(-times / (2.0 * c2)) * l2[0]
        slack = 1.0 + 1e-9
        l2_ok = bool(np.all(l2 <= envelope * slack))
        tv_ok = bool(np.all(tv <= envelope * slack))
        if not flagged:
            floor = (1.0 - rate_tol) / (2.0 * c2)
            rate_ok = bool(rate_l2 >= floor and rate_tv >= floor)

    report = DecayReport(
        times=times,
        l2_distances=l2,
        tv_distances=tv,
        fitted_rate_l2=rate_l2,
        fitted_rate_tv=rate_tv,
        window=tuple(window),
        flagged=flagged,
        monotone=monotone,
        c2=c2,
        l2_bound_ok=l2_ok,
        tv_bound_ok=tv_ok,
        rate_ok=rate_ok,
    )
    if flagged:
        logger.warning(f"衰減擬合：區段 {window} 內點數不足（L²: {n_l2}, TV: {n_tv}），不判定衰減率")
    else:
        logger.info(f"衰減擬合：rate_l2={rate_l2:.6g}（{n_l2} 點）, rate_tv={rate_tv:.6g}（{n_tv} 點）")
    if l2_ok is False or tv_ok is False or rate_ok is False:
        logger.warning(f"衰減上界檢查失敗：l2_ok={l2_ok}, tv_ok={tv_ok}, rate_ok={rate_ok}")
    return report
