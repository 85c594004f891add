"""
內建模型：古典 Ornstein–Uhlenbeck、相對論 OU（ROUP）、Dunkel–Hänggi。

ε 不用猜：以係數條件檢查器在預設網格上算出的 ε* = min(σ_min, g_tail_min) 填入，
ε′ 取允許上界 βε/2 的 3/4；若 e^{−ε′r}f(r) 的尾端在 r_max 仍未低於容許值，就把 r_max 加倍重檢。
"""
from __future__ import annotations

import math
from dataclasses import replace
from typing import Annotated, Callable, Dict, Optional, Tuple

import numpy as np

from models.coefficients import CoefficientSet, constant
from models.hypotheses import (
    DEFAULT_CHECK_NODES,
    DEFAULT_CHECK_R_MAX,
    DEFAULT_F_TAIL_TOL,
    REASON_F_TAIL,
    check_hypotheses,
    tail_profile,
)
from models.radial_grid import RadialGrid
from utils.errors import ModelValidationError
from utils.logger import logger

EPSILON_PRIME_FRACTION = 0.75
MAX_TAIL_EXTENSIONS = 6


def _inverse_lorentz(r):
    return 1.0 / np.sqrt(1.0 + np.asarray(r, dtype=float) ** 2)


def _classical_ou(d: int, beta: float, f: float = 1.0, b: float = 1.0, sigma: float = math.sqrt(2.0)):
    if not (b > 0 and sigma > 0):
        raise ModelValidationError(f"classical_ou 需要 b > 0、sigma > 0，收到 b={b}, sigma={sigma}")
    funcs = {"f": constant(f), "b": constant(b), "sigma": constant(sigma), "eta": constant(0.0)}
    return funcs, 1.0


def _roup(d: int, beta: float):
    funcs = {
        "f": _inverse_lorentz,
        "b": _inverse_lorentz,
        "sigma": constant(math.sqrt(2.0)),
        "eta": constant(0.0),
    }
    return funcs, 1.0


def _dunkel_hanggi(d: int, beta: float):
    def drift(r):
        return 1.0 - (d / beta) * _inverse_lorentz(r)

    def sigma(r):
        return np.sqrt(2.0 * np.sqrt(1.0 + np.asarray(r, dtype=float) ** 2))

    def eta(r):
        return np.asarray(r, dtype=float) * 1.0

    funcs = {"f": _inverse_lorentz, "b": drift, "sigma": sigma, "eta": eta}
    # d/β 修正項在 r ≲ 5d/(3β) 時主導 b，g 之後才單調上升
    return funcs, max(1.0, 5.0 * d / (3.0 * beta))


BUILTIN_MODELS: Dict[str, Callable[..., Tuple[dict, float]]] = {
    "classical_ou": _classical_ou,
    "roup": _roup,
    "dunkel_hanggi": _dunkel_hanggi,
}

OU_OVERRIDES = ("f", "b", "sigma")


def builtin_model(
    name: Annotated[str, "模型名稱：classical_ou / roup / dunkel_hanggi"],
    d: Annotated[int, "空間維度"],
    beta: Annotated[float, "逆溫度 β"],
    grid: Annotated[Optional[RadialGrid], "假說檢查網格；None 時用 [0, max(50, 10 r₀)]、4096 節點"] = None,
    f_tail_tol: Annotated[float, "極限條件的容許值"] = DEFAULT_F_TAIL_TOL,
    **overrides: Annotated[float, "僅 classical_ou：f / b / sigma 常數"],
) -> CoefficientSet:
    """
    建立內建模型並以假說檢查器填入 ε、ε′。

    Args:
        name: 內建模型名稱。
        d: 維度 ≥ 1。
        beta: β > 0。
        grid: 初始檢查網格。
        f_tail_tol: 傳給 check_hypotheses 的 f 尾端容許值。
        **overrides: classical_ou 的常數 f、b、sigma（None 值忽略）。

    Returns:
        已通過係數條件的 CoefficientSet；check_r_max 記錄最後使用的網格右端點。

    Raises:
        ModelValidationError: 名稱未知（列出合法名稱）、參數不合法或延伸網格後仍無法通過。
    """
    if name not in BUILTIN_MODELS:
        raise ModelValidationError(f"未知的內建模型 {name!r}，可用：{sorted(BUILTIN_MODELS)}")
    if int(d) != d or d < 1:
        raise ModelValidationError(f"d 須為 ≥ 1 的整數，收到 {d}")
    if not (math.isfinite(beta) and beta > 0):
        raise ModelValidationError(f"beta 須為正有限值，收到 {beta}")

    overrides = {k: float(v) for k, v in overrides.items() if v is not None}
    if overrides and name != "classical_ou":
        raise ModelValidationError(f"只有 classical_ou 接受常數覆寫，{name} 收到 {sorted(overrides)}")
    unknown = set(overrides) - set(OU_OVERRIDES)
    if unknown:
        raise ModelValidationError(f"未知的覆寫參數 {sorted(unknown)}，可用：{OU_OVERRIDES}")

    funcs, r0 = BUILTIN_MODELS[name](int(d), float(beta), **overrides)
    grid = grid or RadialGrid(r_max=max(DEFAULT_CHECK_R_MAX, 10.0 * r0), n_nodes=DEFAULT_CHECK_NODES)

    # 先用暫定 ε 建立，只為了在網格上取值
    draft = CoefficientSet(
        name=name,
        d=int(d),
        beta=float(beta),
        epsilon=1.0,
        epsilon_prime=0.25 * float(beta),
        tail_start=r0,
        closed_form=name,
        **funcs,
    )
    for _ in range(MAX_TAIL_EXTENSIONS + 1):
        sigma_min, _, g_tail = tail_profile(draft, grid, (r0, grid.r_max))
        epsilon = min(sigma_min, float(np.min(g_tail)))
        if not epsilon > 0:
            raise ModelValidationError(
                f"{name}(d={d}, β={beta}) 的 ε* = {epsilon} 不為正，係數條件無法成立"
            )
        coeffs = replace(
            draft,
            epsilon=epsilon,
            epsilon_prime=EPSILON_PRIME_FRACTION * beta * epsilon / 2.0,
            check_r_max=grid.r_max,
        )
        report = check_hypotheses(coeffs, grid, (r0, grid.r_max), f_tail_tol)
        if report.passed:
            logger.info(
                f"內建模型 {name}: d={d}, β={beta}, ε={coeffs.epsilon:.6g}, "
                f"ε′={coeffs.epsilon_prime:.6g}, r₀={r0:.4g}, 檢查網格 r_max={grid.r_max:g}"
            )
            return coeffs
        if report.reasons != (REASON_F_TAIL,):
            raise ModelValidationError(f"{name}(d={d}, β={beta}) 未通過係數條件：{list(report.reasons)}")
        logger.warning(f"{name}: f 尾端在 r_max={grid.r_max:g} 未達容許值，r_max 加倍重檢")
        grid = grid.with_r_max(2.0 * grid.r_max)

    raise ModelValidationError(f"{name}(d={d}, β={beta}) 延伸網格 {MAX_TAIL_EXTENSIONS} 次後仍未通過係數條件")
