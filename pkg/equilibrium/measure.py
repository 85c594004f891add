"""
不變測度 ν 的建構。

勢函數（基準點 μ(1) = 1、G(0) = 0）：
    μ(r) = exp(∫₁ʳ dρ/(ρ(1+η²)))
    G(r) = ∫₀ʳ g(ρ) dρ，g = 2ρb/σ²
    V(r) = ∫₁ʳ (d−1)/ρ · η²/(1+η²) dρ + βG(r)，U(p) = V(‖p‖)

ν 對 Lebesgue 測度的密度為 Z⁻¹ e^{−U(p)}/σ²(‖p‖)；r 的邊際密度 ∝ μ(r)^{d−1} e^{−βG(r)}/σ²(r)。
Z 含單位球面面積 |𝕊^{d−1}| = 2π^{d/2}/Γ(d/2)，使 ν 在 ℝ^d 上為機率測度；dθ 取機率正規化的均勻測度。

實作：1/(ρ(1+η²)) 拆成 (1−c₀)/ρ − k̃(ρ)，c₀ = η(0)²/(1+η(0)²)、k̃ = (η²/(1+η²) − c₀)/ρ 在 0 附近有界，
對數部分解析處理，只對 k̃ 與 g 做逐格 Romberg。
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Annotated, NamedTuple, Optional, Union

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaln

from equilibrium.quadrature import DEFAULT_RTOL, cumulative_integral
from models.coefficients import CoefficientSet
from models.radial_grid import RadialGrid
from utils.errors import ModelValidationError, NumericalConvergenceError
from utils.logger import logger

DEFAULT_TAIL_TOL = 1e-10
MAX_GRID_EXTENSIONS = 8
POTENTIAL_SPACING = 0.5
_RHO_FLOOR = 1e-300


def log_sphere_area(d: int) -> float:
    """log |𝕊^{d−1}| = log 2 + (d/2) log π − log Γ(d/2)。"""
    return math.log(2.0) + 0.5 * d * math.log(math.pi) - float(gammaln(0.5 * d))


def angular_fraction(coeffs: CoefficientSet, r: np.ndarray) -> np.ndarray:
    """η²/(1+η²)。"""
    eta = coeffs.evaluate("eta", r)
    return eta**2 / (1.0 + eta**2)


def potential_slope(coeffs: CoefficientSet, r: np.ndarray) -> np.ndarray:
    """V′(r) = (d−1)/r · η²/(1+η²) + βg(r)；r = 0 且 d > 1 時未定義（回傳 nan）。"""
    r = np.asarray(r, dtype=float)
    slope = coeffs.beta * coeffs.g(r)
    if coeffs.d > 1:
        with np.errstate(all="ignore"):
            slope = slope + (coeffs.d - 1) * angular_fraction(coeffs, r) / r
    return slope


@dataclass(frozen=True)
class PotentialProfile:
    """網格上的 log μ、G、V（含 r = 0 的極限值）。"""

    nodes: np.ndarray
    log_mu: np.ndarray
    G: np.ndarray
    V: np.ndarray


def potential_profile(
    coeffs: CoefficientSet,
    nodes: Annotated[np.ndarray, "遞增節點，須含 0 與 1"],
    rtol: float = DEFAULT_RTOL,
) -> PotentialProfile:
    """
    在含 0 與 1 的遞增節點上計算 log μ、G、V。

    Raises:
        ModelValidationError: 被積函數非有限（附上節點）。
        NumericalConvergenceError: Romberg 未收斂。
    """
    nodes = np.asarray(nodes, dtype=float)
    if nodes[0] != 0.0 or not np.any(nodes == 1.0):
        raise ModelValidationError("勢函數節點須從 0 起算且包含 r = 1")
    if np.any(np.diff(nodes) <= 0):
        raise ModelValidationError("勢函數節點須嚴格遞增")

    c0 = float(angular_fraction(coeffs, np.zeros(1))[0])

    def kernel(rho):
        return (angular_fraction(coeffs, rho) - c0) / np.maximum(rho, _RHO_FLOOR)

    K = cumulative_integral(kernel, nodes, rtol=rtol, label="μ 的 ∫η²/(ρ(1+η²))")
    G = cumulative_integral(coeffs.g, nodes, rtol=rtol, label="G = ∫g")
    K1 = K[int(np.flatnonzero(nodes == 1.0)[0])]
    K_from_one = K - K1

    with np.errstate(divide="ignore"):
        log_r = np.log(nodes)
    log_mu = (1.0 - c0) * log_r - K_from_one
    angular = (c0 * log_r if c0 > 0 else 0.0) + K_from_one
    V = (coeffs.d - 1) * angular + coeffs.beta * G if coeffs.d > 1 else coeffs.beta * G
    return PotentialProfile(nodes=nodes, log_mu=log_mu, G=G, V=np.asarray(V, dtype=float))


class Potentials(NamedTuple):
    mu: Union[float, np.ndarray]
    G: Union[float, np.ndarray]
    V: Union[float, np.ndarray]
    U: Union[float, np.ndarray]


def potentials(
    coeffs: CoefficientSet,
    r: Annotated[Union[float, np.ndarray], "‖p‖，可為純量或陣列"],
    rtol: float = DEFAULT_RTOL,
) -> Potentials:
    """
    μ、G、V 以及 U = V(‖p‖) 在給定半徑的值。

    Note:
        工作網格為 {0, 1, 查詢點} 與間距 0.5 的等距點的聯集，積分逐格 Romberg 至相對 1e−10。
    """
    r_arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r_arr)) or np.any(r_arr < 0):
        raise ModelValidationError(f"r 須為非負有限值，收到 {r}")
    r_top = max(1.0, float(r_arr.max()) if r_arr.size else 1.0)
    padding = np.linspace(0.0, r_top, int(math.ceil(r_top / POTENTIAL_SPACING)) + 1)
    nodes = np.union1d(np.union1d(padding, [0.0, 1.0]), r_arr.ravel())
    profile = potential_profile(coeffs, nodes, rtol=rtol)

    idx = np.searchsorted(nodes, r_arr)
    mu = np.exp(profile.log_mu[idx])
    G = profile.G[idx]
    V = profile.V[idx]
    if r_arr.ndim == 0:
        return Potentials(mu=float(mu), G=float(G), V=float(V), U=float(V))
    return Potentials(mu=mu, G=G, V=V, U=V.copy())


@dataclass(frozen=True)
class EquilibriumMeasure:
    """
    不變測度 ν 在徑向網格上的表示（建立後不可變）。

    Attributes:
        coeffs: 建立時使用的模型。
        grid: 實際使用的網格（可能已延伸 r_max）。
        mu_vals, G_vals, V_vals: 節點上的勢函數。
        log_Z: log Z（含球面面積）。
        radial_pdf: r 的邊際密度，梯形積分為 1。
        radial_cdf: 累積分佈，由 0 單調增至 1。
        tail_ratio: 截斷端的未正規化密度 / 其最大值。
    """

    coeffs: CoefficientSet
    grid: RadialGrid
    mu_vals: np.ndarray = field(repr=False)
    G_vals: np.ndarray = field(repr=False)
    V_vals: np.ndarray = field(repr=False)
    log_sigma2: np.ndarray = field(repr=False)
    log_Z: float
    radial_pdf: np.ndarray = field(repr=False)
    radial_cdf: np.ndarray = field(repr=False)
    tail_ratio: float

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def d(self) -> int:
        return self.coeffs.d

    @property
    def Z(self) -> float:
        """正規化常數；極端參數下可能溢位為 inf，計算請用 log_Z。"""
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_Z))

    @cached_property
    def lebesgue_log_density(self) -> np.ndarray:
        """節點上 log(dν/dp) = −V − log σ² − log Z。"""
        return -self.V_vals - self.log_sigma2 - self.log_Z

    def log_density(self, r: Union[float, np.ndarray]) -> np.ndarray:
        """‖p‖ = r 處 ν 的 Lebesgue 對數密度（節點間線性內插）。"""
        return np.interp(r, self.nodes, self.lebesgue_log_density)

    @cached_property
    def _cdf_interpolant(self) -> PchipInterpolator:
        return PchipInterpolator(self.nodes, self.radial_cdf, extrapolate=False)

    def radial_cdf_at(self, r: Union[float, np.ndarray]) -> np.ndarray:
        """單調分段三次內插的徑向 CDF；r_max 以外為 1。"""
        r_arr = np.asarray(r, dtype=float)
        out = self._cdf_interpolant(np.clip(r_arr, 0.0, self.grid.r_max))
        return np.clip(out, 0.0, 1.0)

    @cached_property
    def inverse_cdf(self) -> PchipInterpolator:
        """u ↦ r 的單調內插；只取 CDF 嚴格遞增的節點。"""
        cdf = self.radial_cdf
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        return PchipInterpolator(cdf[keep], self.nodes[keep], extrapolate=True)

    def expectation(self, values: np.ndarray) -> float:
        """節點上給定的徑向函數對 ν 的期望值（梯形）。"""
        return float(trapezoid(np.asarray(values) * self.radial_pdf, self.nodes))

    def to_frame(self) -> pd.DataFrame:
        """輸出 CSV 用的 DataFrame：r, mu, G, V, pdf, cdf。"""
        return pd.DataFrame(
            {
                "r": self.nodes,
                "mu": self.mu_vals,
                "G": self.G_vals,
                "V": self.V_vals,
                "pdf": self.radial_pdf,
                "cdf": self.radial_cdf,
            }
        )

    def describe(self) -> dict:
        return {
            "grid": self.grid.describe(),
            "log_Z": float(self.log_Z),
            "tail_ratio": float(self.tail_ratio),
            "mean_r": self.expectation(self.nodes),
        }


def _radial_log_weight(coeffs: CoefficientSet, profile: PotentialProfile, log_sigma2: np.ndarray) -> np.ndarray:
    log_w = -coeffs.beta * profile.G - log_sigma2
    if coeffs.d > 1:
        log_w = log_w + (coeffs.d - 1) * profile.log_mu
    return log_w


def _tail_decreasing(log_w: np.ndarray) -> bool:
    """末 10% 節點的未正規化密度是否遞減。"""
    tail = log_w[-max(3, log_w.size // 10):]
    return bool(tail[-1] < tail[0])


def build_measure(
    coeffs: CoefficientSet,
    grid: Annotated[RadialGrid, "初始網格，尾端不足時 r_max 自動加倍"],
    tail_tol: Annotated[float, "截斷端未正規化密度相對最大值的上限"] = DEFAULT_TAIL_TOL,
    rtol: float = DEFAULT_RTOL,
    max_extensions: int = MAX_GRID_EXTENSIONS,
) -> EquilibriumMeasure:
    """
    建立 EquilibriumMeasure。

    Args:
        coeffs: 模型。
        grid: 起始網格；積分時另插入 r = 1 作為 μ(1) = 1 的基準點，輸出仍只含網格節點。
        tail_tol: 尾端門檻（預設 1e−10）。
        rtol: 勢函數積分的相對容許值。
        max_extensions: r_max 最多加倍次數。

    Returns:
        EquilibriumMeasure。

    Raises:
        ModelValidationError: 尾端密度不遞減（係數條件不成立，不可積）。
        NumericalConvergenceError: 加倍 max_extensions 次後尾端仍未低於門檻。
    """
    for attempt in range(max_extensions + 1):
        nodes = grid.nodes
        work = np.union1d(nodes, [1.0])
        full = potential_profile(coeffs, work, rtol=rtol)
        keep = np.searchsorted(work, nodes)
        profile = PotentialProfile(nodes=nodes, log_mu=full.log_mu[keep], G=full.G[keep], V=full.V[keep])
        sigma = coeffs.evaluate("sigma", nodes)
        with np.errstate(divide="ignore"):
            log_sigma2 = 2.0 * np.log(np.abs(sigma))
        if not np.all(np.isfinite(log_sigma2)):
            bad = float(nodes[np.argmax(~np.isfinite(log_sigma2))])
            raise ModelValidationError(f"σ 在 r={bad} 為 0 或非有限，ν 無定義", offending_r=bad)

        log_w = _radial_log_weight(coeffs, profile, log_sigma2)
        peak = float(np.max(log_w))
        tail_ratio = float(np.exp(log_w[-1] - peak))
        if tail_ratio <= tail_tol:
            break
        if not _tail_decreasing(log_w):
            raise ModelValidationError(
                f"平衡密度在 r_max={grid.r_max:g} 附近不遞減，違反係數條件（g ≥ ε 的尾端條件），ν 不可正規化",
                offending_r=float(grid.r_max),
            )
        if attempt == max_extensions:
            raise NumericalConvergenceError(
                f"r_max 加倍 {max_extensions} 次後尾端比例仍為 {tail_ratio:.3e} > {tail_tol:g}",
                achieved_tol=tail_ratio,
            )
        logger.warning(f"平衡測度尾端比例 {tail_ratio:.3e} > {tail_tol:g}，r_max {grid.r_max:g} → {2 * grid.r_max:g}")
        grid = grid.with_r_max(2.0 * grid.r_max)

    weights = np.exp(log_w - peak)
    mass = float(trapezoid(weights, nodes))
    pdf = weights / mass
    cdf = cumulative_trapezoid(pdf, nodes, initial=0.0)
    cdf = cdf / cdf[-1]
    log_Z = log_sphere_area(coeffs.d) + peak + math.log(mass)

    measure = EquilibriumMeasure(
        coeffs=coeffs,
        grid=grid,
        mu_vals=np.exp(profile.log_mu),
        G_vals=profile.G,
        V_vals=profile.V,
        log_sigma2=log_sigma2,
        log_Z=log_Z,
        radial_pdf=pdf,
        radial_cdf=cdf,
        tail_ratio=tail_ratio,
    )
    logger.info(
        f"平衡測度完成：model={coeffs.name}, nodes={nodes.size}, r_max={grid.r_max:g}, "
        f"log Z={log_Z:.10g}, tail={tail_ratio:.2e}"
    )
    return measure


class MeasureBoundsReport(NamedTuple):
    mu_bounds_ok: bool
    worst_mu_violation: float
    linear_growth_start: float
    G_linear_ok: bool
    worst_G_margin: float

    def to_dict(self) -> dict:
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v)) for k, v in self._asdict().items()}


def measure_bounds_report(
    measure: EquilibriumMeasure,
    tail_start: Annotated[Optional[float], "g ≥ ε 的起點 r₀；None 時取模型 tail_start 或 r_max/10"] = None,
) -> MeasureBoundsReport:
    """
    ν 有限性論證中的兩個界：
        min(1, r) ≤ μ(r) ≤ max(1, r)
        G(r) ≥ εr/2，對 r ≥ max(r₀, 2(r₀ − G(r₀)/ε))（由 g ≥ ε 在 [r₀, ∞) 推得的線性成長起點）
    """
    r = measure.nodes
    mu = measure.mu_vals
    lower = np.minimum(1.0, r)
    upper = np.maximum(1.0, r)
    slack = 1e-12 * upper
    violation = np.maximum(lower - mu, mu - upper)
    worst_mu = float(np.max(violation))

    coeffs = measure.coeffs
    r0 = tail_start if tail_start is not None else (coeffs.tail_start or measure.grid.r_max / 10.0)
    G0 = float(np.interp(r0, r, measure.G_vals))
    start = max(r0, 2.0 * (r0 - G0 / coeffs.epsilon))
    mask = r >= start
    margin = measure.G_vals[mask] - 0.5 * coeffs.epsilon * r[mask]
    worst_G = float(np.min(margin)) if margin.size else float("nan")

    report = MeasureBoundsReport(
        mu_bounds_ok=bool(np.all(violation <= slack)),
        worst_mu_violation=worst_mu,
        linear_growth_start=float(start),
        G_linear_ok=bool(margin.size == 0 or np.all(margin >= -1e-9 * r[mask])),
        worst_G_margin=worst_G,
    )
    logger.info(f"ν 有限性界檢查：{report.to_dict()}")
    return report
