"""
由 EquilibriumMeasure 抽樣：半徑用徑向 CDF 的單調三次反函數，方向為 𝕊^{d−1} 上均勻分佈。

樣本切成固定大小的區段，每段使用 (seed, 區段編號) 衍生的子流，結果與 worker 數無關。
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Annotated

import numpy as np

from equilibrium.measure import EquilibriumMeasure
from simulation.noise import path_generator
from utils.errors import ModelValidationError
from utils.logger import logger

SAMPLE_CHUNK = 65536


def uniform_directions(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """𝕊^{d−1} 上 n 個均勻方向；d = 1 時為隨機正負號。"""
    if d == 1:
        return rng.choice(np.array([-1.0, 1.0]), size=(n, 1))
    z = rng.standard_normal((n, d))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    return z / norms


def _sample_chunk(measure: EquilibriumMeasure, n: int, seed: int, chunk_id: int) -> np.ndarray:
    rng = path_generator(seed, chunk_id)
    u = rng.random(n)
    radii = np.clip(measure.inverse_cdf(u), 0.0, measure.grid.r_max)
    return radii[:, None] * uniform_directions(rng, n, measure.d)


def sample_equilibrium(
    measure: EquilibriumMeasure,
    n: Annotated[int, "樣本數 ≥ 1"],
    seed: Annotated[int, "種子"],
    chunk: Annotated[int, "每段樣本數"] = SAMPLE_CHUNK,
    workers: Annotated[int, "執行緒數"] = 1,
) -> np.ndarray:
    """
    從 ν 抽 n 個動量。

    Returns:
        shape (n, d) 的陣列；同 seed（與同 chunk）得到相同結果。

    Raises:
        ModelValidationError: n < 1。
    """
    if int(n) != n or n < 1:
        raise ModelValidationError(f"樣本數須為 ≥ 1 的整數，收到 {n}")
    n = int(n)
    sizes = [min(chunk, n - start) for start in range(0, n, chunk)]

    def run(item):
        chunk_id, size = item
        return _sample_chunk(measure, size, seed, chunk_id)

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, enumerate(sizes)))
    else:
        parts = [run(item) for item in enumerate(sizes)]
    samples = np.concatenate(parts, axis=0)
    logger.info(f"平衡抽樣完成：model={measure.coeffs.name}, n={n}, d={measure.d}, seed={seed}")
    return samples
