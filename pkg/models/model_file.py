"""
模型定義檔（JSON）載入。

兩種寫法：
    {"name": "my_roup", "d": 3, "beta": 1.0, "builtin": "roup"}
    {"name": "custom", "d": 3, "beta": 1.0, "epsilon": 0.5, "epsilon_prime": 0.1, "tail_start": 2.0,
     "coefficients": {"f": "1/sqrt(1+r^2)", "b": "1/sqrt(1+r^2)", "sigma": "sqrt(2)", "eta": "0"}}

內建模型可省略 epsilon / epsilon_prime（由檢查器計算）；classical_ou 另可帶 "parameters": {"b": ..., "sigma": ..., "f": ...}。
"""
from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import Union

from models.builtin_models import builtin_model
from models.coefficients import COEFFICIENT_NAMES, CoefficientSet
from models.expression import compile_expression
from utils.errors import ModelValidationError
from utils.logger import logger

_ALLOWED_KEYS = {
    "name", "d", "beta", "epsilon", "epsilon_prime", "tail_start",
    "builtin", "coefficients", "parameters",
}


def _number(data: dict, key: str, path: Path) -> float:
    if key not in data:
        raise ModelValidationError(f"模型檔 {path} 缺少必要欄位 {key!r}")
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelValidationError(f"模型檔 {path} 的 {key!r} 須為數值，收到 {value!r}")
    return float(value)


def model_from_dict(data: dict, source: Union[str, Path] = "<dict>") -> CoefficientSet:
    """
    由已解析的 dict 建立 CoefficientSet。

    Raises:
        ModelValidationError: 欄位缺漏、型別錯誤、同時（或都沒）給 builtin 與 coefficients、運算式不合法。
    """
    path = Path(source) if not isinstance(source, Path) else source
    if not isinstance(data, dict):
        raise ModelValidationError(f"模型檔 {path} 頂層須為 JSON 物件")
    unknown = set(data) - _ALLOWED_KEYS
    if unknown:
        raise ModelValidationError(f"模型檔 {path} 含未知欄位 {sorted(unknown)}")

    name = str(data.get("name") or path.stem)
    d = _number(data, "d", path)
    if int(d) != d:
        raise ModelValidationError(f"模型檔 {path} 的 d 須為整數，收到 {d}")
    d = int(d)
    beta = _number(data, "beta", path)
    tail_start = data.get("tail_start")

    has_builtin = "builtin" in data
    has_coefficients = "coefficients" in data
    if has_builtin == has_coefficients:
        raise ModelValidationError(f"模型檔 {path} 須擇一提供 builtin 或 coefficients")

    if has_builtin:
        coeffs = builtin_model(str(data["builtin"]), d, beta, **(data.get("parameters") or {}))
        updates = {"name": name}
        if "epsilon" in data or "epsilon_prime" in data:
            updates["epsilon"] = _number(data, "epsilon", path)
            updates["epsilon_prime"] = _number(data, "epsilon_prime", path)
        if tail_start is not None:
            updates["tail_start"] = float(tail_start)
        coeffs = replace(coeffs, **updates)
        logger.info(f"載入模型檔 {path}：builtin={data['builtin']}, name={name}")
        return coeffs

    if "parameters" in data:
        raise ModelValidationError(f"模型檔 {path} 的 parameters 只適用於 builtin")
    expressions = data["coefficients"]
    if not isinstance(expressions, dict) or set(expressions) != set(COEFFICIENT_NAMES):
        raise ModelValidationError(f"模型檔 {path} 的 coefficients 須剛好包含 {list(COEFFICIENT_NAMES)}")

    names = {"d": float(d), "beta": beta}
    funcs = {key: compile_expression(str(expr), names) for key, expr in expressions.items()}
    coeffs = CoefficientSet(
        name=name,
        d=d,
        beta=beta,
        epsilon=_number(data, "epsilon", path),
        epsilon_prime=_number(data, "epsilon_prime", path),
        tail_start=None if tail_start is None else float(tail_start),
        expressions={key: str(expr) for key, expr in expressions.items()},
        **funcs,
    )
    logger.info(f"載入模型檔 {path}：name={name}, d={d}, β={beta}, ε={coeffs.epsilon}")
    return coeffs


def load_model_file(path: Union[str, Path]) -> CoefficientSet:
    """讀取 JSON 模型檔並建立 CoefficientSet。"""
    path = Path(path)
    if not path.exists():
        raise ModelValidationError(f"找不到模型檔：{path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ModelValidationError(f"模型檔 {path} 不是合法 JSON：{exc.msg}（第 {exc.lineno} 行）") from exc
    return model_from_dict(data, path)
