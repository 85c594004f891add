"""
模型檔的係數運算式：把 "1 - d/beta * (1 + r^2)^(-1/2)" 這類字串編譯成 numpy 可向量化的函式。

文法：
    - 運算子：+ - * / ^（^ 為次方，等同 **），一元正負號，括號
    - 函式：sqrt, exp, log
    - 名稱：r（動量大小）、d、beta（由模型檔帶入）、pi、e
    - 數值常數

實作上用 Python ast 解析後只允許白名單節點，不做任何符號運算，也不呼叫 eval。
"""
from __future__ import annotations

import ast
import math
from typing import Annotated, Callable, Dict, Optional

import numpy as np

from utils.errors import ModelValidationError

_FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
}

_CONSTANTS = {"pi": math.pi, "e": math.e}

_BINARY_OPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _compile_node(node: ast.AST, names: Dict[str, float], source: str) -> Callable[[np.ndarray], np.ndarray]:
    """遞迴把 ast 節點轉成 r -> ndarray 的閉包。"""
    if isinstance(node, ast.Expression):
        return _compile_node(node.body, names, source)

    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda r: np.full_like(r, value, dtype=float)

    if isinstance(node, ast.Name):
        if node.id == "r":
            return lambda r: r
        if node.id in names:
            value = float(names[node.id])
            return lambda r: np.full_like(r, value, dtype=float)
        if node.id in _CONSTANTS:
            value = _CONSTANTS[node.id]
            return lambda r: np.full_like(r, value, dtype=float)
        raise ModelValidationError(f"運算式 '{source}' 含未知名稱：{node.id}")

    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY_OPS:
        op = _BINARY_OPS[type(node.op)]
        left = _compile_node(node.left, names, source)
        right = _compile_node(node.right, names, source)
        return lambda r: op(left(r), right(r))

    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        operand = _compile_node(node.operand, names, source)
        if isinstance(node.op, ast.USub):
            return lambda r: np.negative(operand(r))
        return operand

    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        if node.func.id not in _FUNCTIONS or len(node.args) != 1 or node.keywords:
            raise ModelValidationError(
                f"運算式 '{source}' 僅支援單一參數的 {sorted(_FUNCTIONS)}，收到：{node.func.id}"
            )
        func = _FUNCTIONS[node.func.id]
        arg = _compile_node(node.args[0], names, source)
        return lambda r: func(arg(r))

    raise ModelValidationError(f"運算式 '{source}' 含不支援的語法：{type(node).__name__}")


def compile_expression(
    source: Annotated[str, "係數運算式字串，變數為 r"],
    names: Annotated[Optional[Dict[str, float]], "可引用的具名常數，例：{'d': 3, 'beta': 1.0}"] = None,
) -> Callable[[np.ndarray], np.ndarray]:
    """
    將係數運算式編譯成向量化函式。

    Args:
        source: 運算式字串，^ 視為次方。
        names: 額外具名常數（模型檔的 d、beta）。

    Returns:
        callable，輸入 r（float 或 ndarray），回傳同形狀的 float ndarray。

    Raises:
        ModelValidationError: 語法錯誤或使用白名單以外的名稱／函式。
    """
    if not isinstance(source, str) or not source.strip():
        raise ModelValidationError("係數運算式須為非空字串")
    try:
        tree = ast.parse(source.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ModelValidationError(f"運算式 '{source}' 語法錯誤：{exc.msg}") from exc

    compiled = _compile_node(tree, dict(names or {}), source)

    def evaluate(r):
        r_arr = np.asarray(r, dtype=float)
        with np.errstate(all="ignore"):
            return np.asarray(compiled(r_arr), dtype=float)

    evaluate.source = source
    return evaluate
