"""
models 的單元測試：CoefficientSet、builtin_model、check_hypotheses、model 檔載入。

驗證內建模型通過係數條件並自動填入 ε、ε′；兩個反例（σ 在原點消失、g → 0）以正確的 reason 失敗；
模型檔兩種寫法與錯誤處理。
"""
import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from models.builtin_models import builtin_model
from models.coefficients import CoefficientSet, constant
from models.hypotheses import (
    REASON_F_TAIL,
    REASON_G_TAIL,
    REASON_SIGMA,
    check_hypotheses,
    resolve_tail_window,
)
from models.model_file import load_model_file, model_from_dict
from models.radial_grid import RadialGrid, coarse_indices
from utils.errors import ModelValidationError

EXAMPLES_DIR = Path(__file__).resolve().parents[1] / "models" / "examples"


def _counterexample(name, sigma, b, epsilon=0.5):
    return CoefficientSet(
        name=name,
        f=constant(1.0),
        b=b,
        sigma=sigma,
        eta=constant(0.0),
        d=3,
        beta=1.0,
        epsilon=epsilon,
        epsilon_prime=0.1,
    )


def test_radial_grid_nodes():
    """
    驗證網格從 0 到 r_max 嚴格遞增、節點數正確，原點附近較密。

    實務：所有數值模組共用這個網格，端點與單調性錯了會連帶影響每個積分。
    """
    grid = RadialGrid(r_max=50.0, n_nodes=4096)
    nodes = grid.nodes

    assert nodes.size == 4096
    assert nodes[0] == 0.0 and nodes[-1] == 50.0
    assert np.all(np.diff(nodes) > 0)
    assert nodes[1] - nodes[0] < grid.uniform_spacing
    assert coarse_indices(7).tolist() == [0, 2, 4, 6]
    assert coarse_indices(6).tolist() == [0, 2, 4, 5]


@pytest.mark.parametrize("d, beta", [(1, 1.0), (3, 1.0), (3, 2.0)])
def test_roup_builtin_passes(d, beta):
    """
    驗證 ROUP 內建模型通過係數條件，ε = min(σ, g 尾段) = 1/√2（g = r/√(1+r²) 在 r₀ = 1 取最小）。

    實務：ε 由檢查器算出，不需使用者猜；ε′ 取 βε/2 的 3/4。
    """
    coeffs = builtin_model("roup", d, beta)
    report = check_hypotheses(coeffs)

    assert report.passed
    assert report.reasons == ()
    assert coeffs.epsilon == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-2)
    assert coeffs.epsilon_prime == pytest.approx(0.75 * beta * coeffs.epsilon / 2.0)
    assert report.epsilon_suggestion == pytest.approx(coeffs.epsilon)


@pytest.mark.parametrize("d, beta", [(1, 1.0), (3, 1.0), (3, 2.0)])
def test_dunkel_hanggi_builtin_passes(d, beta):
    """
    驗證 Dunkel–Hänggi 內建模型通過係數條件，尾段起點 r₀ = max(1, 5d/(3β))。

    實務：d/β 修正項讓 b 在小 r 為負，尾段必須從 g 開始遞增處起算。
    """
    coeffs = builtin_model("dunkel_hanggi", d, beta)
    report = check_hypotheses(coeffs)

    assert report.passed
    assert coeffs.tail_start == pytest.approx(max(1.0, 5.0 * d / (3.0 * beta)))
    assert report.g_tail_min >= coeffs.epsilon


def test_classical_ou_overrides():
    """
    驗證 classical_ou 可覆寫常數 b、σ，且其他模型拒絕覆寫。

    實務：常數係數族是驗證譜隙與 OU 變異數公式的解析基準。
    """
    coeffs = builtin_model("classical_ou", 3, 1.0, b=2.0, sigma=2.0)
    np.testing.assert_allclose(coeffs.evaluate("b", np.array([0.0, 10.0])), 2.0)
    np.testing.assert_allclose(coeffs.evaluate("sigma", np.array([0.0, 10.0])), 2.0)

    with pytest.raises(ModelValidationError):
        builtin_model("roup", 3, 1.0, b=2.0)


def test_unknown_builtin_lists_names():
    """
    驗證未知名稱時錯誤訊息列出所有合法名稱。

    實務：CLI 打錯字時使用者能直接看到可用選項。
    """
    with pytest.raises(ModelValidationError) as exc:
        builtin_model("langevin", 3, 1.0)
    assert "roup" in str(exc.value) and "dunkel_hanggi" in str(exc.value)


def test_counterexample_sigma_vanishing():
    """
    驗證 σ(r) = r 在原點為 0，違反 σ ≥ ε，reason 為 sigma_below_epsilon。

    實務：反例模型仍可建立，只有檢查器判定失敗。
    """
    coeffs = _counterexample("sigma_vanishing", sigma=lambda r: np.asarray(r, dtype=float) + 0.0, b=constant(1.0))
    report = check_hypotheses(coeffs, RadialGrid(50.0, 1024))

    assert not report.passed
    assert REASON_SIGMA in report.reasons
    assert report.sigma_min == pytest.approx(0.0)


@pytest.mark.parametrize(
    "sigma, b",
    [
        (constant(math.sqrt(2.0)), lambda r: 1.0 / (1.0 + np.asarray(r) ** 2)),
        (constant(1.0), lambda r: np.exp(-np.asarray(r, dtype=float))),
    ],
    ids=["rational_decay", "exponential_decay"],
)
def test_counterexample_g_tail_vanishing(sigma, b):
    """
    驗證 b 在無窮遠衰減時 g = 2rb/σ² → 0，reason 為 g_tail_below_epsilon。

    實務：b = 1/(1+r²) 與 b = e^{−r} 都讓漂移太弱，ν 不可正規化，必須在模擬前擋下。
    """
    coeffs = _counterexample("g_vanishing", sigma=sigma, b=b)
    report = check_hypotheses(coeffs, RadialGrid(50.0, 1024))

    assert not report.passed
    assert REASON_G_TAIL in report.reasons
    assert REASON_SIGMA not in report.reasons


def test_f_tail_not_vanishing():
    """
    驗證 f 成長比 e^{ε′r} 快時（f = e^r）回報 f_tail_not_vanishing。

    實務：極限條件以尾端單調遞減且末值低於容許值代替。
    """
    coeffs = replace(
        builtin_model("roup", 3, 1.0),
        f=lambda r: np.exp(np.asarray(r, dtype=float)),
    )
    report = check_hypotheses(coeffs)

    assert REASON_F_TAIL in report.reasons
    assert not report.f_tail_ok


def test_non_finite_coefficient_reports_r():
    """
    驗證係數在某節點非有限時拋錯並附上該 r。

    實務：log(r) 在 r = 0 為 −inf，錯誤須指出位置方便除錯。
    """
    coeffs = _counterexample("bad", sigma=lambda r: np.log(np.asarray(r, dtype=float)), b=constant(1.0))
    with pytest.raises(ModelValidationError) as exc:
        check_hypotheses(coeffs, RadialGrid(50.0, 256))
    assert exc.value.offending_r == 0.0


def test_epsilon_prime_bound_enforced():
    """
    驗證 ε′ ≥ βε/2 在建立時即被拒絕。

    實務：此條件與網格無關，放在建構子檢查。
    """
    with pytest.raises(ModelValidationError):
        CoefficientSet(
            name="x", f=constant(1.0), b=constant(1.0), sigma=constant(1.0), eta=constant(0.0),
            d=3, beta=1.0, epsilon=0.5, epsilon_prime=0.25,
        )


def test_tail_window_requires_wide_grid():
    """
    驗證網格 r_max 須至少為尾段起點的 10 倍。

    實務：尾段太短時「r 夠大」的判斷沒有意義。
    """
    coeffs = replace(builtin_model("roup", 3, 1.0), tail_start=10.0)
    with pytest.raises(ModelValidationError):
        resolve_tail_window(coeffs, RadialGrid(50.0, 256))


def test_load_expression_model_matches_builtin():
    """
    驗證 roup_expression.json 的係數與內建 ROUP 逐點一致。

    實務：模型檔與內建模型應可互換，方便使用者從範例改寫自己的模型。
    """
    from_file = load_model_file(EXAMPLES_DIR / "roup_expression.json")
    builtin = builtin_model("roup", 3, 1.0)
    r = RadialGrid(20.0, 512).nodes

    for name in ("f", "b", "sigma", "eta"):
        np.testing.assert_allclose(from_file.evaluate(name, r), builtin.evaluate(name, r), rtol=1e-14)
    assert from_file.tail_start == 1.0
    assert from_file.describe()["coefficients"]["sigma"] == "sqrt(2)"
    assert check_hypotheses(from_file).passed


def test_load_builtin_model_file_with_parameters():
    """
    驗證 builtin 寫法的模型檔可帶 classical_ou 參數與自訂名稱。

    實務：模型檔的 name 會寫進所有輸出，需與檔案設定一致。
    """
    coeffs = load_model_file(EXAMPLES_DIR / "classical_ou_builtin.json")

    assert coeffs.name == "classical_ou_b2"
    np.testing.assert_allclose(coeffs.evaluate("b", np.array([3.0])), 2.0)


def test_model_file_errors(tmp_path):
    """
    驗證模型檔的各種錯誤：不存在、非 JSON、未知欄位、builtin 與 coefficients 並存。

    實務：錯誤都以 ModelValidationError 呈現，CLI 統一回傳 exit 1。
    """
    with pytest.raises(ModelValidationError):
        load_model_file(tmp_path / "missing.json")

    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ModelValidationError):
        load_model_file(broken)

    with pytest.raises(ModelValidationError):
        model_from_dict({"d": 3, "beta": 1.0, "builtin": "roup", "colour": "red"})

    both = {"d": 3, "beta": 1.0, "builtin": "roup", "coefficients": {}}
    path = tmp_path / "both.json"
    path.write_text(json.dumps(both), encoding="utf-8")
    with pytest.raises(ModelValidationError):
        load_model_file(path)
