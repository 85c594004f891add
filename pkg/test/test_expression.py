"""
models/expression 的單元測試：compile_expression。

驗證係數運算式的文法（^ 次方、sqrt/exp/log、d/beta 具名常數）、向量化輸出、白名單拒絕。
"""
import numpy as np
import pytest

from models.expression import compile_expression
from utils.errors import ModelValidationError


def test_compile_power_and_names():
    """
    驗證 ^ 視為次方，d 與 beta 由 names 帶入。

    實務：Dunkel–Hänggi 的 b 以字串寫在模型檔內，須與解析式逐點一致。
    """
    b = compile_expression("1 - d/beta * (1+r^2)^(-1/2)", {"d": 3, "beta": 2.0})
    r = np.array([0.0, 1.0, 5.0])

    expected = 1.0 - 1.5 / np.sqrt(1.0 + r**2)
    np.testing.assert_allclose(b(r), expected, rtol=1e-15)
    assert b.source == "1 - d/beta * (1+r^2)^(-1/2)"


def test_constant_expression_broadcasts():
    """
    驗證不含 r 的運算式仍回傳與輸入同形狀的陣列。

    實務：σ = "sqrt(2)" 在網格上取值時必須是向量，不能是純量。
    """
    sigma = compile_expression("sqrt(2)")
    out = sigma(np.zeros(4))

    assert out.shape == (4,)
    np.testing.assert_allclose(out, np.sqrt(2.0))


def test_functions_and_constants():
    """
    驗證 exp、log、pi、e 與一元負號。

    實務：確保白名單內的函式都能正確組合。
    """
    func = compile_expression("-exp(log(r)) + pi - e")
    np.testing.assert_allclose(func(np.array([2.0])), -2.0 + np.pi - np.e)


@pytest.mark.parametrize(
    "source",
    ["__import__('os')", "r.real", "sin(r)", "q + r", "r if r else 1", "", "1 +"],
)
def test_rejects_disallowed_syntax(source):
    """
    驗證白名單外的名稱、屬性存取、函式、條件式與語法錯誤都被拒絕。

    實務：模型檔來自使用者，運算式不可執行任意程式碼。
    """
    with pytest.raises(ModelValidationError):
        compile_expression(source)
