"""
徑向網格：[0, r_max] 上先幾何、後等距的混合節點。

原點附近以幾何級數加密（第一格為等距格寬的 geometric_start 倍，每格放大 geometric_ratio），
加密段結束後接等距格，總節點數固定為 n_nodes。假說檢查、平衡測度、生成元離散化共用同一種網格。
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Annotated

import numpy as np

from utils.errors import ModelValidationError


@dataclass(frozen=True)
class RadialGrid:
    """
    徑向網格描述子（不可變）。

    Attributes:
        r_max: 右端點。
        n_nodes: 節點總數（含 0 與 r_max）。
        geometric_start: 幾何段第一格 / 等距格寬；設為 1 即退化為等距網格。
        geometric_ratio: 幾何段相鄰格寬比。
    """

    r_max: float
    n_nodes: int = 4096
    geometric_start: float = 0.05
    geometric_ratio: float = 1.15

    def __post_init__(self):
        if not (math.isfinite(self.r_max) and self.r_max > 0):
            raise ModelValidationError(f"r_max 須為正有限值，收到 {self.r_max}")
        if self.n_nodes < 8:
            raise ModelValidationError(f"n_nodes 至少為 8，收到 {self.n_nodes}")
        if not (0 < self.geometric_start <= 1) or self.geometric_ratio <= 1:
            raise ModelValidationError("geometric_start 須在 (0, 1]，geometric_ratio 須大於 1")

    @cached_property
    def nodes(self) -> np.ndarray:
        """節點座標，嚴格遞增，nodes[0] = 0、nodes[-1] = r_max。"""
        if self.geometric_start >= 1.0:
            return np.linspace(0.0, self.r_max, self.n_nodes)

        q = self.geometric_ratio
        n_geometric = math.ceil(math.log(1.0 / self.geometric_start) / math.log(q))
        n_uniform = self.n_nodes - 1 - n_geometric
        if n_uniform < 1:
            raise ModelValidationError(
                f"n_nodes={self.n_nodes} 不足以容納 {n_geometric} 個幾何加密格"
            )
        geometric_factors = self.geometric_start * q ** np.arange(n_geometric)
        h = self.r_max / (n_uniform + geometric_factors.sum())

        spacings = np.concatenate([h * geometric_factors, np.full(n_uniform, h)])
        nodes = np.concatenate([[0.0], np.cumsum(spacings)])
        nodes[-1] = self.r_max
        return nodes

    @property
    def uniform_spacing(self) -> float:
        """等距段格寬。"""
        return float(self.nodes[-1] - self.nodes[-2])

    def with_r_max(self, r_max: Annotated[float, "新的右端點"]) -> "RadialGrid":
        return replace(self, r_max=float(r_max))

    def with_nodes(self, n_nodes: Annotated[int, "新的節點數"]) -> "RadialGrid":
        return replace(self, n_nodes=int(n_nodes))

    def describe(self) -> dict:
        """寫入報告／manifest 用的描述。"""
        return {
            "r_max": float(self.r_max),
            "n_nodes": int(self.n_nodes),
            "geometric_start": float(self.geometric_start),
            "geometric_ratio": float(self.geometric_ratio),
        }


def coarse_indices(n_nodes: int) -> np.ndarray:
    """每隔一個節點取一個（保留最後一點），Richardson 外插的粗網格索引。"""
    idx = np.arange(0, n_nodes, 2)
    if idx[-1] != n_nodes - 1:
        idx = np.append(idx, n_nodes - 1)
    return idx
