"""
領域例外定義：讓 CLI 能依錯誤種類對應 exit code。

- ModelValidationError：參數或模型不合法（exit 1）
- CertificationError：Lyapunov / Poincaré 認證失敗（exit 1）
- NumericalConvergenceError：數值方法未收斂（exit 2）
- StepRejectedError：Euler–Maruyama 單步爆掉（exit 2）
"""
from __future__ import annotations

from typing import Any, Optional


class ModelValidationError(ValueError):
    """模型、參數或模型檔不合法；offending_r 記錄出問題的半徑（若有）。"""

    def __init__(self, message: str, offending_r: Optional[float] = None):
        super().__init__(message)
        self.offending_r = offending_r


class NumericalConvergenceError(RuntimeError):
    """數值方法未達容許誤差；achieved_tol 為實際達到的誤差估計。"""

    def __init__(self, message: str, achieved_tol: Optional[float] = None):
        super().__init__(message)
        self.achieved_tol = achieved_tol


class StepRejectedError(RuntimeError):
    """單步結果非有限值，pre_step_state 保留出事前的 PhasePoint。"""

    def __init__(self, message: str, pre_step_state: Any = None):
        super().__init__(message)
        self.pre_step_state = pre_step_state


class CertificationError(RuntimeError):
    """找不到滿足限制式的 (c, R)，或 Poincaré 常數與數值 spectral gap 矛盾。"""
