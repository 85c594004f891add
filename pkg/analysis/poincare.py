"""
Poincaré 常數 c₂ = (1/α)(1 + 2βγκ_R/ε²)。

κ_R：球 B(0,R) 上均勻測度的 Payne–Weinberger 常數 (2R)²/π²，
乘上 exp(osc)（ν 對 Lebesgue 密度的 log 在球內的振幅，Holley–Stroock 擾動）。
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Annotated, Optional

import numpy as np

from analysis.generator import GapResult, spectral_gap
from analysis.lyapunov import LyapunovCertificate
from equilibrium.measure import EquilibriumMeasure
from models.coefficients import CoefficientSet
from utils.errors import CertificationError
from utils.logger import logger

CONSISTENCY_TOL = 1e-9


@dataclass(frozen=True)
class PoincareBound:
    kappa_R: float
    c2: float
    lambda1: float
    consistent: bool
    oscillation: float
    cert: LyapunovCertificate
    model: str
    gap_converged: bool = True

    def to_record(self) -> dict:
        """CLI 輸出的 JSON 紀錄。"""
        return {
            "model": self.model,
            "beta": self.cert.beta,
            "d": self.cert.d,
            "epsilon": self.cert.epsilon,
            "c": self.cert.c,
            "R": self.cert.R,
            "alpha": self.cert.alpha,
            "gamma": self.cert.gamma,
            "kappa_R": self.kappa_R,
            "c2": self.c2,
            "lambda1": self.lambda1,
            "consistent": self.consistent,
        }


def poincare_c2(alpha: float, gamma: float, kappa_R: float, beta: float, epsilon: float) -> float:
    return (1.0 / alpha) * (1.0 + 2.0 * beta * gamma * kappa_R / epsilon**2)


def local_poincare_constant(measure: EquilibriumMeasure, R: Annotated[float, "球半徑"]) -> tuple:
    """回傳 (κ_R, osc)。"""
    nodes = measure.nodes
    if R > nodes[-1]:
        raise CertificationError(f"R={R:g} 超出平衡測度網格 r_max={nodes[-1]:g}")
    log_density = measure.lebesgue_log_density
    inside = log_density[nodes <= R]
    edge = np.interp(R, nodes, log_density)
    values = np.append(inside, edge)
    osc = float(np.max(values) - np.min(values))
    kappa = (2.0 * R) ** 2 / math.pi**2 * math.exp(osc)
    return kappa, osc


def poincare_constant(
    cert: LyapunovCertificate,
    coeffs: CoefficientSet,
    measure: EquilibriumMeasure,
    gap: Annotated[Optional[GapResult], "已算好的譜隙；None 時現算"] = None,
    tolerance: float = CONSISTENCY_TOL,
) -> PoincareBound:
    """
    由 Lyapunov 證書組出 c₂ 並與數值譜隙比較。

    Raises:
        CertificationError: 證書未驗證（worst_residual > 0），或 1/c₂ > λ₁(1 + tolerance)。
    """
    if cert.worst_residual > 0:
        raise CertificationError(f"Lyapunov 證書未通過驗證（worst_residual={cert.worst_residual:.3e}）")
    kappa, osc = local_poincare_constant(measure, cert.R)
    c2 = poincare_c2(cert.alpha, cert.gamma, kappa, cert.beta, cert.epsilon)
    if gap is None:
        gap = spectral_gap(coeffs, measure)
    consistent = 1.0 / c2 <= gap.lambda1 * (1.0 + tolerance)
    bound = PoincareBound(
        kappa_R=kappa,
        c2=c2,
        lambda1=gap.lambda1,
        consistent=bool(consistent),
        oscillation=osc,
        cert=cert,
        model=coeffs.name,
        gap_converged=gap.converged,
    )
    if not consistent:
        logger.error(f"Poincaré 常數不一致：model={coeffs.name}, 1/c₂={1.0 / c2:.6g} > λ₁={gap.lambda1:.6g}")
        raise CertificationError(f"1/c₂ = {1.0 / c2:.6g} 大於數值譜隙 λ₁ = {gap.lambda1:.6g}")
    logger.info(
        f"Poincaré：model={coeffs.name}, κ_R={kappa:.6g}, osc={osc:.4g}, c₂={c2:.6g}, λ₁={gap.lambda1:.6g}"
    )
    return bound
