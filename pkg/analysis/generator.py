"""
生成元 𝓛_{σ²} 在球諧扇區 ℓ 上的離散化與譜隙。

徑向部分寫成散度形式
    𝓛_r u = (1/ρ)(A u′)′，ρ = μ^{d−1}e^{−βG}/σ²，A = μ^{d−1}e^{−βG}/(2β)
扇區 ℓ 再加上位能 q(r) = σ²/(2βr²)·ℓ(ℓ+d−2)：−𝓛_ℓ = −𝓛_r + q。

有限體積：節點 r_i、控制體積為相鄰中點之間，質量 m_i = ∫ρ（梯形子規則），
通量係數 a_{i+1/2} = A(r_{i+1/2})/(r_{i+1} − r_i)，兩端零通量。
對稱化矩陣 S = M^{−1/2}(K + Mq)M^{−1/2} 為三對角，特徵值交給 scipy 的 eigh_tridiagonal。
ℓ ≥ 1 在 r = 0 取 Dirichlet（去掉節點 0）；d = 1 時 ℓ = 1 即奇扇區，位能為 0。
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Annotated, Dict, Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

from equilibrium.measure import EquilibriumMeasure, build_measure, potential_profile
from models.coefficients import CoefficientSet
from utils.errors import ModelValidationError
from utils.logger import logger

WEIGHT_FLOOR = 1e-150
EIGEN_TOL = 1e-10
REFINEMENT_TOL = 5e-3


@dataclass(frozen=True)
class RadialOperator:
    """
    −𝓛_ℓ 的對稱三對角表示（不可變）。

    Attributes:
        coeffs: 模型。
        sector: 球諧次數 ℓ。
        nodes: 保留的節點（ℓ ≥ 1 時不含 r = 0，尾端權重下溢時截斷）。
        masses: 控制體積的 ν 質量，總和為 1。
        fluxes: 相鄰節點間的通量係數 a_{i+1/2}，長度 nodes.size − 1。
        potential: 扇區位能 q_i。
        boundary_flux: ℓ ≥ 1 時節點 0 與節點 1 之間的通量（Dirichlet 項），否則為 0。
        truncated: 是否因權重下溢截斷尾端。
    """

    coeffs: CoefficientSet = field(repr=False)
    sector: int
    nodes: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)
    fluxes: np.ndarray = field(repr=False)
    potential: np.ndarray = field(repr=False)
    boundary_flux: float = 0.0
    truncated: bool = False

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def stiffness_diagonal(self) -> np.ndarray:
        """K + Mq 的對角線。"""
        diag = np.zeros(self.size)
        diag[:-1] += self.fluxes
        diag[1:] += self.fluxes
        diag[0] += self.boundary_flux
        return diag + self.masses * self.potential

    @property
    def stiffness_offdiagonal(self) -> np.ndarray:
        return -self.fluxes

    def symmetric_tridiagonal(self):
        """回傳 (diag, offdiag)：S = M^{−1/2}(K + Mq)M^{−1/2}。"""
        root = np.sqrt(self.masses)
        diag = self.stiffness_diagonal / self.masses
        off = self.stiffness_offdiagonal / root[:-1] / root[1:]
        return diag, off

    def symmetric_matrix(self) -> np.ndarray:
        """稠密對稱矩陣（僅供小網格檢查）。"""
        diag, off = self.symmetric_tridiagonal()
        return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)

    def apply(self, u: Annotated[np.ndarray, "節點上的函數值"]) -> np.ndarray:
        """𝓛_ℓ u（注意為 −S 的相似版本，非對稱化前的形式）。"""
        u = np.asarray(u, dtype=float)
        Ku = self.stiffness_diagonal * u
        Ku[:-1] += self.stiffness_offdiagonal * u[1:]
        Ku[1:] += self.stiffness_offdiagonal * u[:-1]
        return -Ku / self.masses

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """⟨u, v⟩ 於 L²(ν)。"""
        return float(np.sum(self.masses * np.asarray(u) * np.asarray(v)))

    def dirichlet_form(self, u: np.ndarray) -> float:
        """⟨−𝓛_ℓ u, u⟩_ν = Σ a (Δu)² + Σ m q u²（含 Dirichlet 邊界項）。"""
        u = np.asarray(u, dtype=float)
        value = np.sum(self.fluxes * np.diff(u) ** 2) + np.sum(self.masses * self.potential * u**2)
        return float(value + self.boundary_flux * u[0] ** 2)

    def scaled(self, k: Annotated[float, "正的倍數"]) -> "RadialOperator":
        """整個算子乘以 k（質量不變）。"""
        return RadialOperator(
            coeffs=self.coeffs,
            sector=self.sector,
            nodes=self.nodes,
            masses=self.masses,
            fluxes=self.fluxes * k,
            potential=self.potential * k,
            boundary_flux=self.boundary_flux * k,
            truncated=self.truncated,
        )

    def eigenvalues(self, k: Annotated[int, "最小的 k 個"] = 2) -> np.ndarray:
        return smallest_eigenvalues(self, k)


def _sector_weight(coeffs: CoefficientSet, log_mu: np.ndarray, G: np.ndarray) -> np.ndarray:
    log_w = -coeffs.beta * G
    if coeffs.d > 1:
        log_w = log_w + (coeffs.d - 1) * log_mu
    return log_w


def discretize_generator(
    coeffs: CoefficientSet,
    measure: EquilibriumMeasure,
    sector: Annotated[int, "球諧次數 ℓ ≥ 0"] = 0,
    weight_floor: Annotated[float, "尾端相對權重下限，低於此值即截斷"] = WEIGHT_FLOOR,
) -> RadialOperator:
    """
    把 −𝓛_ℓ 離散成對 ν 徑向權重自伴的三對角算子。

    Raises:
        ModelValidationError: ℓ < 0、d = 1 時 ℓ > 1，或 measure 不是由 coeffs 建立。
    """
    if int(sector) != sector or sector < 0:
        raise ModelValidationError(f"扇區 ℓ 須為非負整數，收到 {sector}")
    sector = int(sector)
    if coeffs.d == 1 and sector > 1:
        raise ModelValidationError("d = 1 只有偶（ℓ=0）與奇（ℓ=1）兩個扇區")
    if measure.coeffs is not coeffs and measure.coeffs != coeffs:
        raise ModelValidationError(f"measure 建立於 {measure.coeffs.name}，與 {coeffs.name} 不符")

    nodes = measure.nodes
    log_w_nodes = _sector_weight(coeffs, np.log(np.maximum(measure.mu_vals, 1e-300)), measure.G_vals)
    log_w_nodes = log_w_nodes - measure.log_sigma2
    peak = float(np.max(log_w_nodes))
    above = np.flatnonzero(log_w_nodes - peak >= math.log(weight_floor))
    last = int(above[-1])
    truncated = last < nodes.size - 1
    if truncated:
        logger.warning(
            f"生成元離散化：權重低於 {weight_floor:g}，網格由 r_max={nodes[-1]:g} 截斷至 r={nodes[last]:g}"
        )
        nodes = nodes[: last + 1]
        log_w_nodes = log_w_nodes[: last + 1]

    mids = 0.5 * (nodes[:-1] + nodes[1:])
    work = np.union1d(np.union1d(nodes, mids), [1.0])
    profile = potential_profile(coeffs, work)
    at_mid = np.searchsorted(work, mids)
    sigma_mid = coeffs.evaluate("sigma", mids)
    log_w_mid = _sector_weight(coeffs, profile.log_mu[at_mid], profile.G[at_mid])
    with np.errstate(divide="ignore"):
        rho_mid = np.exp(log_w_mid - 2.0 * np.log(np.abs(sigma_mid)) - peak)
    rho_nodes = np.exp(log_w_nodes - peak)
    flux_mid = np.exp(log_w_mid - peak) / (2.0 * coeffs.beta)

    h = np.diff(nodes)
    masses = np.zeros(nodes.size)
    masses[:-1] += 0.25 * h * (rho_nodes[:-1] + rho_mid)
    masses[1:] += 0.25 * h * (rho_mid + rho_nodes[1:])
    fluxes = flux_mid / h
    total = float(masses.sum())
    masses = masses / total
    fluxes = fluxes / total

    sigma_nodes = coeffs.evaluate("sigma", nodes)
    with np.errstate(divide="ignore", invalid="ignore"):
        potential = sigma_nodes**2 / (2.0 * coeffs.beta * nodes**2) * sector * (sector + coeffs.d - 2)
    boundary_flux = 0.0
    if sector >= 1:
        boundary_flux = float(fluxes[0])
        nodes, masses, fluxes, potential = nodes[1:], masses[1:], fluxes[1:], potential[1:]
        # ℓ ≥ 1 的本徵函數在原點為 0，質量改以保留的節點重新正規化
        scale = float(masses.sum())
        masses, fluxes, boundary_flux = masses / scale, fluxes / scale, boundary_flux / scale
    potential = np.where(np.isfinite(potential), potential, 0.0)

    op = RadialOperator(
        coeffs=coeffs,
        sector=sector,
        nodes=nodes,
        masses=masses,
        fluxes=fluxes,
        potential=potential,
        boundary_flux=boundary_flux,
        truncated=truncated,
    )
    logger.info(f"生成元離散化：model={coeffs.name}, ℓ={sector}, nodes={op.size}, r_max={nodes[-1]:g}")
    return op


def smallest_eigenvalues(op: RadialOperator, k: int = 2, tol: float = EIGEN_TOL) -> np.ndarray:
    """−𝓛_ℓ 最小的 k 個特徵值（遞增）。"""
    diag, off = op.symmetric_tridiagonal()
    k = min(int(k), op.size)
    return eigh_tridiagonal(
        diag, off, eigvals_only=True, select="i", select_range=(0, k - 1), tol=tol
    )


def sector_gaps(coeffs: CoefficientSet, measure: EquilibriumMeasure) -> Dict[int, float]:
    """ℓ = 0 的第一個非零特徵值與 ℓ = 1 的基態特徵值。"""

    def run(sector):
        op = discretize_generator(coeffs, measure, sector)
        values = smallest_eigenvalues(op, 2)
        return float(values[1] if sector == 0 else values[0])

    with ThreadPoolExecutor(max_workers=2) as ex:
        radial, angular = ex.map(run, (0, 1))
    return {0: radial, 1: angular}


@dataclass(frozen=True)
class GapResult:
    """
    譜隙結果。

    Attributes:
        lambda1: min(ℓ=0 非零特徵值, ℓ=1 基態特徵值)。
        sectors: 各扇區的值。
        attained_sector: 取到最小值的扇區。
        refined_lambda1: 節點數加倍後的值（未做檢查時為 None）。
        relative_change: 兩種解析度的相對差。
        converged: 相對差 ≤ 0.5%。
        n_nodes: 主網格節點數。
    """

    lambda1: float
    sectors: Dict[int, float]
    attained_sector: int
    refined_lambda1: Optional[float]
    relative_change: float
    converged: bool
    n_nodes: int

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda_radial": self.sectors[0],
            "lambda_angular": self.sectors[1],
            "attained_sector": self.attained_sector,
            "refined_lambda1": self.refined_lambda1,
            "relative_change": self.relative_change,
            "converged": self.converged,
            "n_nodes": self.n_nodes,
        }


def spectral_gap(
    coeffs: CoefficientSet,
    measure: EquilibriumMeasure,
    refine: Annotated[bool, "是否以加倍節點數重算並比較"] = True,
    refinement_tol: float = REFINEMENT_TOL,
) -> GapResult:
    """
    數值譜隙 λ₁。ℓ ≥ 2 的位能對 ℓ 遞增，故只需比較 ℓ ∈ {0, 1}。

    Note:
        兩種解析度相差超過 refinement_tol 時結果標記為 converged=False，由呼叫端決定如何處理。
    """
    sectors = sector_gaps(coeffs, measure)
    attained = min(sectors, key=sectors.get)
    lambda1 = sectors[attained]

    refined = None
    change = 0.0
    if refine:
        fine_measure = build_measure(coeffs, measure.grid.with_nodes(2 * measure.grid.n_nodes))
        fine = sector_gaps(coeffs, fine_measure)
        refined = min(fine.values())
        change = abs(refined - lambda1) / max(abs(refined), 1e-300)
    converged = change <= refinement_tol

    result = GapResult(
        lambda1=float(lambda1),
        sectors=sectors,
        attained_sector=int(attained),
        refined_lambda1=refined,
        relative_change=float(change),
        converged=bool(converged),
        n_nodes=int(measure.grid.n_nodes),
    )
    if converged:
        logger.info(
            f"譜隙：model={coeffs.name}, λ₁={lambda1:.8g}（ℓ={attained}）, "
            f"ℓ=0:{sectors[0]:.6g}, ℓ=1:{sectors[1]:.6g}, 加密相對差={change:.2e}"
        )
    else:
        logger.warning(f"譜隙未收斂：model={coeffs.name}, λ₁={lambda1:.8g}, 加密相對差={change:.2e} > {refinement_tol:g}")
    return result


def carre_du_champ(
    coeffs: CoefficientSet,
    r: Annotated[np.ndarray, "半徑"],
    du: Annotated[np.ndarray, "徑向導數 u′(r)，或形狀 (..., d) 的梯度"],
) -> np.ndarray:
    """Γ(u, u) = (σ²/2β)|∇u|²。"""
    r = np.asarray(r, dtype=float)
    du = np.asarray(du, dtype=float)
    grad_sq = du**2 if du.ndim == r.ndim else np.sum(du**2, axis=-1)
    return coeffs.evaluate("sigma", r) ** 2 / (2.0 * coeffs.beta) * grad_sq
