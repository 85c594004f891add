"""
布朗增量與可重現的逐路徑亂數子流。

每條路徑 i 的子流由 (seed, i) 以 SeedSequence 的 spawn_key 衍生，再交給 counter-based 的 Philox，
因此結果只取決於 (seed, i)，與分塊方式、worker 數量或路徑排列順序無關。
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Annotated

import numpy as np

from utils.errors import ModelValidationError

SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseIncrement:
    """一步的增量：dW ∈ ℝ^d 與獨立的純量 dw，皆為 N(0, dt)。"""

    dW: np.ndarray
    dw: float

    @classmethod
    def zero(cls, d: int) -> "NoiseIncrement":
        return cls(dW=np.zeros(d), dw=0.0)

    @classmethod
    def from_row(cls, row: np.ndarray) -> "NoiseIncrement":
        """由 (d+1,) 的列建立：前 d 個為 dW，最後一個為 dw。"""
        row = np.asarray(row, dtype=float)
        return cls(dW=row[:-1].copy(), dw=float(row[-1]))

    def as_row(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.dW, dtype=float), [self.dw]])


def path_generator(
    seed: Annotated[int, "主種子（64 位元）"],
    stream_id: Annotated[int, "路徑（子流）編號"],
) -> np.random.Generator:
    """回傳路徑 stream_id 專屬的 Generator。"""
    if stream_id < 0:
        raise ModelValidationError(f"stream_id 須非負，收到 {stream_id}")
    seq = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(seq))


def draw_increments(
    rng: np.random.Generator,
    n_steps: Annotated[int, "步數"],
    d: Annotated[int, "維度"],
    dt: Annotated[float, "時間步長"],
) -> np.ndarray:
    """
    連續抽 n_steps 步的增量。

    Returns:
        shape (n_steps, d+1)：前 d 欄為 dW，最後一欄為 dw，皆已乘上 √dt。
    """
    return rng.standard_normal((n_steps, d + 1)) * np.sqrt(dt)


def noise_increment(rng: np.random.Generator, d: int, dt: float) -> NoiseIncrement:
    """抽單步增量（與 draw_increments 消耗相同的亂數序列）。"""
    return NoiseIncrement.from_row(draw_increments(rng, 1, d, dt)[0])


def coarsen_increments(
    increments: Annotated[np.ndarray, "(n_steps, ...) 細步長增量"],
    factor: Annotated[int, "合併的步數 ≥ 1"],
) -> np.ndarray:
    """
    把相鄰 factor 步的增量相加，得到同一條布朗路徑在 factor·dt 步長下的增量。

    Raises:
        ModelValidationError: factor < 1 或步數不是 factor 的整數倍。
    """
    if factor < 1 or increments.shape[0] % factor != 0:
        raise ModelValidationError(f"步數 {increments.shape[0]} 無法以 factor={factor} 合併")
    return increments.reshape((increments.shape[0] // factor, factor) + increments.shape[1:]).sum(axis=1)
