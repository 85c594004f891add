"""
徑向對稱模型層。

- coefficients: CoefficientSet（f, b, σ, η 與 d, β, ε, ε′）
- builtin_models: classical_ou / roup / dunkel_hanggi
- hypotheses: 係數條件網格檢查與 HypothesisReport
- radial_grid: 共用的徑向網格
- model_file / expression: JSON 模型檔與係數運算式
"""

from models.builtin_models import BUILTIN_MODELS, builtin_model
from models.coefficients import CoefficientSet
from models.hypotheses import HypothesisReport, check_hypotheses
from models.model_file import load_model_file
from models.radial_grid import RadialGrid

__all__ = [
    "BUILTIN_MODELS",
    "CoefficientSet",
    "HypothesisReport",
    "RadialGrid",
    "builtin_model",
    "check_hypotheses",
    "load_model_file",
]
