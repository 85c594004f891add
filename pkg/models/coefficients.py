"""
徑向對稱相對論擴散的係數集合。

一組模型由四個只依賴 r = ‖p‖ 的係數函式 f, b, σ, η 與 (d, β, ε, ε′) 決定：
    dxⁱ = f(r) pⁱ dt
    dpⁱ = −b(r) pⁱ dt + σ(r) (β[1+η(r)²])^{−1/2} [dWⁱ + η(r) θⁱ dw]

係數函式以「接受 numpy 陣列、逐點計算」的 callable 表示；內建模型另帶 closed_form 標籤，
模型檔則保留原始運算式字串以便寫回 manifest。
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Annotated, Callable, Dict, Optional

import numpy as np

from utils.errors import ModelValidationError

COEFFICIENT_NAMES = ("f", "b", "sigma", "eta")

CoefficientFunction = Callable[[np.ndarray], np.ndarray]


def constant(value: float) -> CoefficientFunction:
    """常數係數，輸出形狀與輸入 r 相同。"""
    value = float(value)

    def evaluate(r):
        return np.full(np.shape(r), value, dtype=float)

    return evaluate


@dataclass(frozen=True)
class CoefficientSet:
    """
    一個徑向對稱模型（建立後不可變，可安全地在多個 worker 間共用）。

    Attributes:
        name: 模型名稱（內建名稱或模型檔的 name）。
        f, b, sigma, eta: 係數函式，r ∈ [0, ∞)。
        d: 空間維度 ≥ 1。
        beta: 逆溫度 β > 0。
        epsilon: 係數條件的 ε > 0。
        epsilon_prime: 係數條件的 ε′，須滿足 0 < ε′ < βε/2。
        tail_start: 「r 夠大」的起點 r₀；None 時檢查器使用 r_max/10。
        check_r_max: 填入 ε 時所用假說檢查網格的右端點；None 時用預設 50。
        closed_form: 內建模型標籤（classical_ou / roup / dunkel_hanggi），使用者模型為 None。
        expressions: 模型檔的原始運算式（寫入 manifest 用）。

    Note:
        σ ≥ ε 這條不變量由 check_hypotheses 在網格上驗證，不在建構時檢查，
        因此反例模型（例如 σ(r) = r）仍可建立並得到 passed=False 的報告。
    """

    name: str
    f: CoefficientFunction
    b: CoefficientFunction
    sigma: CoefficientFunction
    eta: CoefficientFunction
    d: int
    beta: float
    epsilon: float
    epsilon_prime: float
    tail_start: Optional[float] = None
    check_r_max: Optional[float] = None
    closed_form: Optional[str] = None
    expressions: Optional[Dict[str, str]] = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ModelValidationError(f"d 須為 ≥ 1 的整數，收到 {self.d}")
        for label, value in (("beta", self.beta), ("epsilon", self.epsilon), ("epsilon_prime", self.epsilon_prime)):
            if not (math.isfinite(value) and value > 0):
                raise ModelValidationError(f"{label} 須為正有限值，收到 {value}")
        if not self.epsilon_prime < self.beta * self.epsilon / 2:
            raise ModelValidationError(
                f"須滿足 ε′ < βε/2：ε′={self.epsilon_prime}, βε/2={self.beta * self.epsilon / 2}"
            )
        if self.tail_start is not None and not self.tail_start > 0:
            raise ModelValidationError(f"tail_start 須為正值，收到 {self.tail_start}")

    def evaluate(
        self,
        name: Annotated[str, "係數名稱：f / b / sigma / eta"],
        r: Annotated[np.ndarray, "半徑（可為純量或陣列）"],
    ) -> np.ndarray:
        """逐點計算係數，輸出廣播成 r 的形狀。"""
        if name not in COEFFICIENT_NAMES:
            raise ModelValidationError(f"未知係數 {name}，可用：{COEFFICIENT_NAMES}")
        r_arr = np.asarray(r, dtype=float)
        with np.errstate(all="ignore"):
            values = np.asarray(getattr(self, name)(r_arr), dtype=float)
        return np.broadcast_to(values, r_arr.shape).astype(float, copy=False)

    def g(self, r: np.ndarray) -> np.ndarray:
        """g(r) = 2r·b(r)/σ(r)²。"""
        r_arr = np.asarray(r, dtype=float)
        sigma = self.evaluate("sigma", r_arr)
        with np.errstate(all="ignore"):
            return 2.0 * r_arr * self.evaluate("b", r_arr) / sigma**2

    def noise_scale(self, r: np.ndarray) -> np.ndarray:
        """乘性雜訊強度 σ(r)(β[1+η(r)²])^{−1/2}。"""
        eta = self.evaluate("eta", r)
        return self.evaluate("sigma", r) / np.sqrt(self.beta * (1.0 + eta**2))

    def describe(self) -> dict:
        """manifest / JSON 輸出用的描述（不含 callable 本身）。"""
        out = {
            "name": self.name,
            "d": int(self.d),
            "beta": float(self.beta),
            "epsilon": float(self.epsilon),
            "epsilon_prime": float(self.epsilon_prime),
            "tail_start": None if self.tail_start is None else float(self.tail_start),
            "builtin": self.closed_form,
        }
        if self.expressions:
            out["coefficients"] = dict(self.expressions)
        return out
