"""
analysis/lyapunov 的單元測試：generator_on_surrogate、lyapunov_certificate、drift_inequality_margin。

驗證內建模型可找到證書且 α = cε³/4、(d−1)/R + c ≤ βε/2，
drift 不等式在驗證網格上處處成立；搜尋範圍不可行或模型未通過係數條件時拒絕。
"""
import math

import numpy as np
import pytest

from analysis.lyapunov import (
    SearchBox,
    drift_inequality_margin,
    generator_on_surrogate,
    lyapunov_certificate,
)
from models.builtin_models import builtin_model
from models.coefficients import CoefficientSet, constant
from models.radial_grid import RadialGrid
from utils.errors import CertificationError, ModelValidationError


@pytest.mark.parametrize("name", ["roup", "dunkel_hanggi"])
def test_certificate_for_builtin_models(name):
    """
    驗證 β=1、d=3 的內建模型能找到證書，參數滿足限制式，且 drift 邊際 ≥ −1e−12。

    實務：證書是後續 Poincaré 常數的唯一輸入，任何一條限制式鬆掉都會讓 c₂ 失去意義。
    """
    coeffs = builtin_model(name, 3, 1.0)
    cert = lyapunov_certificate(coeffs)

    assert cert.alpha == pytest.approx(cert.c * coeffs.epsilon**3 / 4.0)
    assert (coeffs.d - 1) / cert.R + cert.c <= coeffs.beta * coeffs.epsilon / 2.0 + 1e-12
    assert cert.R >= coeffs.tail_start
    assert cert.worst_residual <= 0.0
    assert cert.gamma >= 0.0

    nodes = RadialGrid(50.0, 4096).nodes
    assert drift_inequality_margin(cert, coeffs, nodes).min() >= -1e-12
    assert set(cert.to_dict()) >= {"c", "R", "alpha", "gamma", "worst_residual"}


def test_certificate_prefers_largest_c():
    """
    驗證 d = 1（無 (d−1)/R 限制）時 ROUP 取到搜尋格點中最大的 c = βε/2。

    實務：c 越大 α 越大，c₂ 越小；搜尋由大到小，第一個通過者即最佳。
    """
    coeffs = builtin_model("roup", 1, 1.0)
    cert = lyapunov_certificate(coeffs)
    assert cert.c == pytest.approx(coeffs.beta * coeffs.epsilon / 2.0)


def test_surrogate_generator_large_r_limit():
    """
    驗證 ROUP 在 r → ∞ 時 𝓛W/W → c(c − β)（σ² = 2，g → 1）。

    實務：尾端的負號來自 c < β，是 drift 條件在球外成立的原因。
    """
    coeffs = builtin_model("roup", 3, 1.0)
    c = 0.2
    value = generator_on_surrogate(coeffs, np.array([1e6]), c)[0]
    assert value == pytest.approx(c * (c - 1.0), rel=1e-4)


def test_surrogate_generator_at_origin_is_finite():
    """
    驗證 r = 0 時 𝓛W/W 有限且等於 (σ²/2β)·c/δ（d = 1，只剩 δ²/s³ 項）。

    實務：平滑化 s = √(δ² + r²) 讓 W 在原點可微，γ 因此有限。
    """
    coeffs = builtin_model("roup", 1, 1.0)
    delta = 1e-3
    value = generator_on_surrogate(coeffs, np.array([0.0]), 0.3, delta)[0]
    assert math.isfinite(value)
    assert value == pytest.approx(0.3 / delta)


def test_empty_search_box_raises():
    """
    驗證 c 範圍超過 βε/2 時沒有候選，拋出 CertificationError。

    實務：使用者自訂搜尋範圍時，限制式不可行要明確失敗。
    """
    coeffs = builtin_model("roup", 3, 1.0)
    box = SearchBox(c_range=(10.0, 20.0), c_steps=5)
    with pytest.raises(CertificationError):
        lyapunov_certificate(coeffs, search_box=box)


def test_model_failing_hypotheses_is_rejected():
    """
    驗證 σ 在原點消失的模型在搜尋前就被拒絕。

    實務：係數條件不成立時證書沒有理論依據，回傳 ModelValidationError（exit 1）。
    """
    coeffs = CoefficientSet(
        name="sigma_vanishing",
        f=constant(1.0),
        b=constant(1.0),
        sigma=lambda r: np.asarray(r, dtype=float) + 0.0,
        eta=constant(0.0),
        d=3,
        beta=1.0,
        epsilon=0.5,
        epsilon_prime=0.1,
    )
    with pytest.raises(ModelValidationError):
        lyapunov_certificate(coeffs)
