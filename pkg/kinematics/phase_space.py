"""
Minkowski 運動學（質量 m = 1）。

- 動量 p ∈ ℝ^d，r = ‖p‖，θ = p/r
- 偽範數關係 (p⁰)² − ‖p‖² = 1，因此 p⁰ = √(1+r²) = dt/ds
- 速度 v = p/p⁰，恆有 ‖v‖ < 1

p⁰ 一律由 p 重算，不獨立積分。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Annotated, NamedTuple, Optional

import numpy as np

from utils.errors import ModelValidationError

PSEUDO_NORM_TOL = 1e-10
DIRECTION_TOL = 1e-12
DEGENERATE_R = 1e-9


def _as_vector(p, label: str = "p") -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ModelValidationError(f"{label} 須為非空一維向量，收到 shape={arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelValidationError(f"{label} 含非有限值：{arr}")
    return arr


def lorentz_factor(p: np.ndarray) -> np.ndarray:
    """p⁰ = √(1+‖p‖²)，沿最後一軸計算（可批次）。"""
    p = np.asarray(p, dtype=float)
    return np.sqrt(1.0 + np.sum(p * p, axis=-1))


class LiftResult(NamedTuple):
    p0: float
    velocity: np.ndarray


def lift(p: Annotated[np.ndarray, "空間動量 p ∈ ℝ^d"]) -> LiftResult:
    """
    將空間動量提升到單位切叢：回傳 p⁰ 與速度。

    Returns:
        LiftResult(p0=√(1+‖p‖²), velocity=p/p⁰)。

    Raises:
        ModelValidationError: p 含非有限值。
    """
    p = _as_vector(p)
    p0 = float(lorentz_factor(p))
    return LiftResult(p0=p0, velocity=p / p0)


class SphericalMomentum(NamedTuple):
    r: float
    theta: np.ndarray
    degenerate: bool


def to_spherical(p: np.ndarray) -> SphericalMomentum:
    """
    p → (r, θ)。r = 0（或低於 1e−9）時 θ 取第一個標準基底向量並設 degenerate=True。
    """
    p = _as_vector(p)
    r = float(np.linalg.norm(p))
    if r < DEGENERATE_R:
        theta = np.zeros_like(p)
        theta[0] = 1.0
        return SphericalMomentum(r=r, theta=theta, degenerate=True)
    return SphericalMomentum(r=r, theta=p / r, degenerate=False)


def from_spherical(r: float, theta: np.ndarray) -> np.ndarray:
    """(r, θ) → p = rθ。"""
    if not (np.isfinite(r) and r >= 0):
        raise ModelValidationError(f"r 須為非負有限值，收到 {r}")
    theta = _as_vector(theta, "theta")
    return float(r) * theta


@dataclass(frozen=True)
class MomentumState:
    """空間動量與其導出量 r、θ。"""

    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _as_vector(self.p))

    @property
    def r(self) -> float:
        return float(np.linalg.norm(self.p))

    @property
    def theta(self) -> np.ndarray:
        return to_spherical(self.p).theta

    @property
    def degenerate(self) -> bool:
        return to_spherical(self.p).degenerate


@dataclass(frozen=True)
class PhasePoint:
    """
    相空間狀態 (t, x, p⁰, p) 與累積固有時 s。

    Note:
        建構時檢查 |(p⁰)² − ‖p‖² − 1| ≤ 1e−10 與 p⁰ ≥ 1；一般請用 phase_point_from_momentum 建立。
    """

    t: float
    x: np.ndarray
    p0: float
    p: np.ndarray
    s: float = 0.0
    residual: float = field(init=False, repr=False, compare=False, default=0.0)

    def __post_init__(self):
        p = _as_vector(self.p)
        x = _as_vector(self.x, "x")
        if x.shape != p.shape:
            raise ModelValidationError(f"x 與 p 維度不符：{x.shape} vs {p.shape}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "x", x)
        residual = float(self.p0) ** 2 - float(p @ p) - 1.0
        if abs(residual) > PSEUDO_NORM_TOL * max(1.0, float(self.p0) ** 2) or self.p0 < 1.0:
            raise ModelValidationError(
                f"違反偽範數關係：p0={self.p0}, ‖p‖²={float(p @ p)}, residual={residual:.3e}"
            )
        if self.t < 0 or self.s < 0:
            raise ModelValidationError(f"t 與 s 須非負，收到 t={self.t}, s={self.s}")
        object.__setattr__(self, "residual", residual)

    @property
    def d(self) -> int:
        return int(self.p.size)

    @property
    def r(self) -> float:
        return float(np.linalg.norm(self.p))

    @property
    def velocity(self) -> np.ndarray:
        return self.p / self.p0

    @property
    def pseudo_norm_residual(self) -> float:
        """(p⁰)² − ‖p‖² − 1。"""
        return self.residual

    def as_row(self) -> np.ndarray:
        """輸出 CSV 用：t, s, x₁..x_d, p⁰, p₁..p_d。"""
        return np.concatenate([[self.t, self.s], self.x, [self.p0], self.p])


def phase_point_from_momentum(
    p: Annotated[np.ndarray, "空間動量"],
    x: Annotated[Optional[np.ndarray], "位置；None 時為原點"] = None,
    t: float = 0.0,
    s: float = 0.0,
) -> PhasePoint:
    """由 p 建立 PhasePoint，p⁰ 由偽範數關係決定。"""
    p = _as_vector(p)
    x = np.zeros_like(p) if x is None else x
    return PhasePoint(t=float(t), x=x, p0=float(lorentz_factor(p)), p=p, s=float(s))
