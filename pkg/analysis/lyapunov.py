"""
Lyapunov 證書：W(p) = e^{c·s}，s = √(δ² + ‖p‖²)。

W 全域光滑、W ≥ 1、|∇W/W| ≤ c；‖p‖ ≫ δ 時與 e^{c‖p‖} 同形。徑向導數有解析式：
    𝓛W/W = (σ²/2β)·c·[c r²/s² + δ²/s³ + (d−1)/s − ((d−1)η²/(1+η²) + 2βr²b/σ²)/s]
在網格上逐一嘗試 (c, R)，c 由大到小、R 由小到大，第一組使 𝓛W + αW − γ1_B ≤ 0 處處成立者即為證書。
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Annotated, Optional, Tuple

import numpy as np

from equilibrium.measure import angular_fraction
from models.coefficients import CoefficientSet
from models.hypotheses import check_hypotheses
from models.radial_grid import RadialGrid
from utils.errors import CertificationError, ModelValidationError
from utils.logger import logger

SURROGATE_DELTA = 1e-3
DEFAULT_GRID_R_MAX = 50.0
DEFAULT_GRID_NODES = 4096
C_STEPS = 50
R_STEPS = 50
MARGIN_TOL = 1e-12


@dataclass(frozen=True)
class SearchBox:
    """
    (c, R) 的搜尋範圍；None 表示由模型推得。

    c 預設為 βε/2·k/c_steps（k = 1..c_steps），R 預設為 [r₀, min(10r₀, r_max)] 上 r_steps 個等距點。
    """

    c_range: Optional[Tuple[float, float]] = None
    R_range: Optional[Tuple[float, float]] = None
    c_steps: int = C_STEPS
    R_steps: int = R_STEPS


@dataclass(frozen=True)
class LyapunovCertificate:
    c: float
    R: float
    alpha: float
    gamma: float
    worst_residual: float
    epsilon: float
    beta: float
    d: int
    delta: float
    grid: dict

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "R": self.R,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "worst_residual": self.worst_residual,
            "delta": self.delta,
            "grid": dict(self.grid),
        }


def generator_on_surrogate(
    coeffs: CoefficientSet,
    r: Annotated[np.ndarray, "半徑節點"],
    c: Annotated[float, "指數 c"],
    delta: float = SURROGATE_DELTA,
) -> np.ndarray:
    """𝓛_{σ²}W / W 的解析值（W 只依賴 ‖p‖，角向部分為 0）。"""
    r = np.asarray(r, dtype=float)
    d = coeffs.d
    s = np.sqrt(delta**2 + r**2)
    sigma2 = coeffs.evaluate("sigma", r) ** 2
    bracket = c * r**2 / s**2 + delta**2 / s**3
    drift = 2.0 * coeffs.beta * r**2 * coeffs.evaluate("b", r) / sigma2
    if d > 1:
        bracket = bracket + (d - 1) * (1.0 - angular_fraction(coeffs, r)) / s
    bracket = bracket - drift / s
    return sigma2 / (2.0 * coeffs.beta) * c * bracket


def _surrogate(r: np.ndarray, c: float, delta: float) -> np.ndarray:
    return np.exp(c * np.sqrt(delta**2 + r**2))


def _residual(coeffs, r, c, R, alpha, delta):
    W = _surrogate(r, c, delta)
    values = (generator_on_surrogate(coeffs, r, c, delta) + alpha) * W
    inside = r <= R
    gamma = max(0.0, float(np.max(values[inside])))
    return values - gamma * inside, gamma


def lyapunov_certificate(
    coeffs: CoefficientSet,
    search_box: Annotated[Optional[SearchBox], "(c, R) 搜尋範圍"] = None,
    grid: Annotated[Optional[RadialGrid], "驗證網格，預設 [0, 50]、4096 節點"] = None,
    delta: float = SURROGATE_DELTA,
) -> LyapunovCertificate:
    """
    找出最大的 c（與其下最小的 R）並驗證 drift 條件。

    Raises:
        ModelValidationError: 模型未通過係數條件檢查。
        CertificationError: 搜尋範圍內沒有 (c, R) 滿足 (d−1)/R + c ≤ βε/2，或全部驗證失敗。
    """
    report = check_hypotheses(coeffs)
    if not report.passed:
        raise ModelValidationError(f"{coeffs.name} 未通過係數條件：{', '.join(report.reasons)}")
    box = search_box or SearchBox()
    grid = grid or RadialGrid(r_max=DEFAULT_GRID_R_MAX, n_nodes=DEFAULT_GRID_NODES)
    r = grid.nodes
    eps, beta, d = coeffs.epsilon, coeffs.beta, coeffs.d
    bound = beta * eps / 2.0
    r0 = report.tail_start_r0

    if box.c_range is None:
        c_grid = bound * np.arange(1, box.c_steps + 1) / box.c_steps
    else:
        c_grid = np.linspace(box.c_range[0], box.c_range[1], box.c_steps)
    R_lo, R_hi = box.R_range or (r0, min(10.0 * r0, grid.r_max))
    R_grid = np.linspace(max(R_lo, r0), R_hi, box.R_steps)

    candidates = [
        (float(c), float(R))
        for c in sorted(c_grid[c_grid > 0], reverse=True)
        for R in R_grid
        if (d - 1) / R + c <= bound
    ]
    if not candidates:
        raise CertificationError(
            f"搜尋範圍內沒有 (c, R) 滿足 (d−1)/R + c ≤ βε/2 = {bound:.6g}（R ≥ r₀ = {r0:g}）"
        )

    best = None
    for c, R in candidates:
        alpha = c * eps**3 / 4.0
        residual, gamma = _residual(coeffs, r, c, R, alpha, delta)
        worst = float(np.max(residual))
        if best is None or worst < best[-1]:
            best = (c, R, worst)
        if worst <= 0.0:
            cert = LyapunovCertificate(
                c=c, R=R, alpha=alpha, gamma=gamma, worst_residual=worst,
                epsilon=eps, beta=beta, d=d, delta=delta, grid=grid.describe(),
            )
            logger.info(
                f"Lyapunov 證書：model={coeffs.name}, c={c:.6g}, R={R:.6g}, α={alpha:.6g}, "
                f"γ={gamma:.6g}, worst={worst:.3e}"
            )
            return cert
    raise CertificationError(
        f"{len(candidates)} 組 (c, R) 皆未通過 drift 驗證；最佳 c={best[0]:.6g}, R={best[1]:.6g}, "
        f"最大殘差 {best[2]:.3e}"
    )


def drift_inequality_margin(
    cert: LyapunovCertificate,
    coeffs: CoefficientSet,
    r: Annotated[np.ndarray, "半徑節點"],
) -> np.ndarray:
    """
    −(1/α)𝓛W/W + (γ/α)(1/W)1_B − 1；證書成立時處處 ≥ −1e−12。
    """
    r = np.asarray(r, dtype=float)
    W = _surrogate(r, cert.c, cert.delta)
    lw = generator_on_surrogate(coeffs, r, cert.c, cert.delta)
    inside = (r <= cert.R).astype(float)
    return -lw / cert.alpha + cert.gamma / cert.alpha * inside / W - 1.0
