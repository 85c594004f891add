"""
不變性檢查：∫ 𝓛_{σ²} f dν 應為 0。

旋轉對稱的測試函數 f(p) = F(‖p‖) 走徑向形式
    𝓛_r F = (σ²/2β)(F″ + (d−1)/r · F′ − [(d−1)/r · η²/(1+η²) + βg] F′)
其餘走 Cartesian 形式 𝓛_{σ²} f = (σ²/2β)(Δf − ∇U·∇f)，∇U = V′(r)θ，球面平均以固定求積公式計算。
徑向積分在全網格與隔點粗網格各做一次梯形，再以 Richardson 組合；兩種解析度不一致即拒絕。
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Annotated, Callable, Optional, Tuple

import numpy as np

from equilibrium.measure import EquilibriumMeasure, angular_fraction, potential_slope
from equilibrium.quadrature import richardson_trapezoid
from models.coefficients import CoefficientSet
from models.radial_grid import coarse_indices
from utils.errors import NumericalConvergenceError
from utils.logger import logger

DIFF_STEP = 1e-5
DEFAULT_CONVERGENCE_TOL = 1e-5
NODE_BATCH = 256
SPHERE_SEED = 20240611

ArrayFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RadialProfile:
    """f(p) = F(‖p‖)；未提供的導數以中央差分（步長 1e−5）補上。"""

    F: ArrayFunction
    dF: Optional[ArrayFunction] = None
    d2F: Optional[ArrayFunction] = None

    def derivatives(self, r: np.ndarray, step: float = DIFF_STEP) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """回傳 (F, F′, F″)；差分在 r < h 時以偶延拓 F(−x) = F(x) 處理。"""
        F0 = np.asarray(self.F(r), dtype=float)
        plus = np.asarray(self.F(r + step), dtype=float)
        minus = np.asarray(self.F(np.abs(r - step)), dtype=float)
        dF = self.dF(r) if self.dF is not None else (plus - minus) / (2.0 * step)
        d2F = self.d2F(r) if self.d2F is not None else (plus - 2.0 * F0 + minus) / step**2
        return F0, np.asarray(dF, dtype=float), np.asarray(d2F, dtype=float)


@dataclass(frozen=True)
class Observable:
    """
    ℝ^d 上的測試函數。

    Attributes:
        name: 報告用名稱。
        func: (..., d) → (...)。
        gradient: (..., d) → (..., d)；None 時中央差分。
        laplacian: (..., d) → (...)；None 時中央差分。
        radial: 若旋轉對稱，提供徑向剖面即改用徑向形式。
    """

    name: str
    func: ArrayFunction
    gradient: Optional[ArrayFunction] = None
    laplacian: Optional[ArrayFunction] = None
    radial: Optional[RadialProfile] = None

    def derivatives(self, P: np.ndarray, step: float = DIFF_STEP) -> Tuple[np.ndarray, np.ndarray]:
        """回傳 (∇f, Δf)。"""
        if self.gradient is not None and self.laplacian is not None:
            return np.asarray(self.gradient(P), dtype=float), np.asarray(self.laplacian(P), dtype=float)
        d = P.shape[-1]
        f0 = np.asarray(self.func(P), dtype=float)
        grad = np.empty(P.shape, dtype=float)
        lap = np.zeros(P.shape[:-1], dtype=float)
        for k in range(d):
            shift = np.zeros(d)
            shift[k] = step
            plus = np.asarray(self.func(P + shift), dtype=float)
            minus = np.asarray(self.func(P - shift), dtype=float)
            grad[..., k] = (plus - minus) / (2.0 * step)
            lap += (plus - 2.0 * f0 + minus) / step**2
        if self.gradient is not None:
            grad = np.asarray(self.gradient(P), dtype=float)
        if self.laplacian is not None:
            lap = np.asarray(self.laplacian(P), dtype=float)
        return grad, lap


def constant_observable(value: float = 1.0) -> Observable:
    return Observable(
        name=f"const({value:g})",
        func=lambda P: np.full(P.shape[:-1], float(value)),
        radial=RadialProfile(
            F=lambda r: np.full(np.shape(r), float(value)),
            dF=lambda r: np.zeros(np.shape(r)),
            d2F=lambda r: np.zeros(np.shape(r)),
        ),
    )


def coordinate_observable(index: int = 0) -> Observable:
    """f(p) = p^{index+1}（非旋轉對稱，走 Cartesian 形式）。"""

    def gradient(P):
        grad = np.zeros_like(P)
        grad[..., index] = 1.0
        return grad

    return Observable(
        name=f"p{index + 1}",
        func=lambda P: P[..., index],
        gradient=gradient,
        laplacian=lambda P: np.zeros(P.shape[:-1]),
    )


def squared_norm_observable() -> Observable:
    return Observable(
        name="|p|^2",
        func=lambda P: np.sum(P * P, axis=-1),
        radial=RadialProfile(F=lambda r: r**2, dF=lambda r: 2.0 * r, d2F=lambda r: np.full(np.shape(r), 2.0)),
    )


def gaussian_observable() -> Observable:
    return Observable(
        name="exp(-|p|^2)",
        func=lambda P: np.exp(-np.sum(P * P, axis=-1)),
        radial=RadialProfile(
            F=lambda r: np.exp(-(r**2)),
            dF=lambda r: -2.0 * r * np.exp(-(r**2)),
            d2F=lambda r: (4.0 * r**2 - 2.0) * np.exp(-(r**2)),
        ),
    )


def radial_observable(F: ArrayFunction, name: str = "F(|p|)") -> Observable:
    """只給徑向剖面 F 的測試函數，導數全部走中央差分。"""
    return Observable(
        name=name,
        func=lambda P: F(np.linalg.norm(P, axis=-1)),
        radial=RadialProfile(F=F),
    )


OBSERVABLES = {
    "const": constant_observable,
    "p1": coordinate_observable,
    "norm2": squared_norm_observable,
    "gaussian": gaussian_observable,
}


def radial_generator_apply(
    coeffs: CoefficientSet,
    r: Annotated[np.ndarray, "半徑節點"],
    dF: Annotated[np.ndarray, "F′(r)"],
    d2F: Annotated[np.ndarray, "F″(r)"],
) -> np.ndarray:
    """
    𝓛_r 作用在徑向剖面上。

    Note:
        r = 0 且 d > 1 時取極限：(d−1)(1 − η²/(1+η²))F′/r → (d−1)(1 − c₀)F″(0)（F′(0) = 0 的光滑剖面）。
    """
    r = np.asarray(r, dtype=float)
    sigma = coeffs.evaluate("sigma", r)
    scale = sigma**2 / (2.0 * coeffs.beta)
    value = d2F - coeffs.beta * coeffs.g(r) * dF
    if coeffs.d > 1:
        keep = 1.0 - angular_fraction(coeffs, r)
        safe_r = np.where(r > 0, r, 1.0)
        term = np.where(r > 0, (coeffs.d - 1) * keep * dF / safe_r, (coeffs.d - 1) * keep * d2F)
        value = value + term
    return scale * value


def sphere_quadrature(d: int, resolution: int = 32) -> Tuple[np.ndarray, np.ndarray]:
    """
    𝕊^{d−1} 上的求積點與權重（權重和為 1，奇次矩為 0）。

    d = 1：±1；d = 2：等距角度；d = 3：cos ϑ 的 Gauss–Legendre × 等距 φ；
    d ≥ 4：固定種子的對稱（±z）隨機點。
    """
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
    if d == 2:
        phi = 2.0 * np.pi * np.arange(2 * resolution) / (2 * resolution)
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return dirs, np.full(phi.size, 1.0 / phi.size)
    if d == 3:
        x, w = np.polynomial.legendre.leggauss(resolution // 2)
        phi = 2.0 * np.pi * np.arange(resolution) / resolution
        cos_t, ph = np.meshgrid(x, phi, indexing="ij")
        sin_t = np.sqrt(1.0 - cos_t**2)
        dirs = np.stack([sin_t * np.cos(ph), sin_t * np.sin(ph), cos_t], axis=-1).reshape(-1, 3)
        weights = (np.repeat(w, resolution) / 2.0) / resolution
        return dirs, weights
    rng = np.random.default_rng(SPHERE_SEED + d)
    z = rng.standard_normal((16 * resolution, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    dirs = np.concatenate([z, -z], axis=0)
    return dirs, np.full(dirs.shape[0], 1.0 / dirs.shape[0])


def _radial_integrand(measure: EquilibriumMeasure, observable: Observable, step: float) -> np.ndarray:
    r = measure.nodes
    _, dF, d2F = observable.radial.derivatives(r, step)
    values = radial_generator_apply(measure.coeffs, r, dF, d2F)
    return values * measure.radial_pdf


def _cartesian_integrand(measure: EquilibriumMeasure, observable: Observable, step: float) -> np.ndarray:
    coeffs = measure.coeffs
    r = measure.nodes
    dirs, weights = sphere_quadrature(coeffs.d)
    out = np.zeros_like(r)
    skip_origin = coeffs.d > 1
    for start in range(0, r.size, NODE_BATCH):
        rb = r[start:start + NODE_BATCH]
        P = rb[:, None, None] * dirs[None, :, :]
        grad, lap = observable.derivatives(P, step)
        slope = potential_slope(coeffs, rb)
        radial_dir = np.einsum("jk,njk->nj", dirs, grad)
        scale = coeffs.evaluate("sigma", rb) ** 2 / (2.0 * coeffs.beta)
        with np.errstate(invalid="ignore"):
            gen = scale[:, None] * (lap - slope[:, None] * radial_dir)
        averaged = gen @ weights
        if skip_origin:
            averaged = np.where(rb > 0, averaged, 0.0)
        out[start:start + NODE_BATCH] = averaged
    return out * measure.radial_pdf


def stationarity_residual(
    measure: EquilibriumMeasure,
    testfn: Annotated[Observable, "測試函數；radial 不為 None 時用徑向形式"],
    step: Annotated[float, "中央差分步長"] = DIFF_STEP,
    convergence_tol: Annotated[float, "兩種解析度 Richardson 值的最大差異"] = DEFAULT_CONVERGENCE_TOL,
) -> float:
    """
    計算 ∫ 𝓛_{σ²} f dν。

    Returns:
        全網格的 Richardson 外插值。

    Raises:
        NumericalConvergenceError: 全網格與粗網格的外插值差異超過 convergence_tol（附上差異）。
    """
    if testfn.radial is not None:
        integrand = _radial_integrand(measure, testfn, step)
        form = "radial"
    else:
        integrand = _cartesian_integrand(measure, testfn, step)
        form = "cartesian"
    if measure.d > 1:
        integrand[0] = 0.0

    nodes = measure.nodes
    coarse = coarse_indices(nodes.size)
    fine_value, _, _ = richardson_trapezoid(integrand, nodes, coarse)
    coarse_value, _, _ = richardson_trapezoid(integrand[coarse], nodes[coarse], coarse_indices(coarse.size))
    gap = abs(fine_value - coarse_value)
    if not np.isfinite(fine_value) or gap > convergence_tol:
        raise NumericalConvergenceError(
            f"stationarity({testfn.name}) 兩種解析度差 {gap:.3e} > {convergence_tol:g}",
            achieved_tol=gap,
        )
    logger.info(
        f"stationarity：model={measure.coeffs.name}, f={testfn.name}, form={form}, "
        f"residual={fine_value:.3e}, 解析度差={gap:.2e}"
    )
    return float(fine_value)
