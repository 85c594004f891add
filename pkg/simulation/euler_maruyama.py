"""
系統 (⋆) 的 Euler–Maruyama 模擬（Itô 慣例，雜訊係數取步前狀態）。

    pⁱ ← pⁱ − b(r)pⁱ dt + σ(r)(β(1+η(r)²))^{−1/2}(dWⁱ + η(r)θⁱ dw)
    xⁱ ← xⁱ + f(r)pⁱ dt
    s  ← s + dt/√(1+r²)
    p⁰ ← √(1+‖p‖²)

核心更新對 (m, d) 的動量矩陣向量化；單路徑 em_step、軌跡與系綜都走同一個核心。
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Annotated, List, Optional, Sequence, Tuple

import numpy as np

from kinematics.phase_space import DEGENERATE_R, PhasePoint, lorentz_factor
from models.coefficients import CoefficientSet
from simulation.noise import NoiseIncrement, draw_increments, path_generator
from utils.errors import ModelValidationError, StepRejectedError
from utils.logger import logger

DEFAULT_DT = 1e-3
DEFAULT_T_END = 50.0
DEFAULT_CHUNK_STEPS = 512
DEFAULT_BLOCK_SIZE = 2048
STEP_GRID_TOL = 1e-9


def _whole_steps(t: float, dt: float, label: str) -> int:
    """t/dt 的步數；t 不是 dt 的整數倍（相對誤差 1e−9 內）時拒絕。"""
    q = t / dt
    n = int(round(q))
    if abs(q - n) > STEP_GRID_TOL * max(1.0, abs(q)):
        raise ModelValidationError(f"{label}={t:g} 不是 dt={dt:g} 的整數倍，輸出時間會與要求不符")
    return n


@dataclass(frozen=True)
class SimConfig:
    """
    模擬設定。

    Attributes:
        dt: 時間步長 > 0。
        t_end: 終止時間 > 0。
        seed: 主種子（64 位元整數）。
        n_paths: 路徑數。
        checkpoint_times: 遞增的輸出時間，須落在 [0, t_end]；空白時只輸出 t_end。
            t_end 與每個輸出時間都須是 dt 的整數倍，輸出的時間戳就是這些值本身。
        chunk_steps: 每次向子流抽取的步數（只影響記憶體，不影響結果）。
    """

    dt: float = DEFAULT_DT
    t_end: float = DEFAULT_T_END
    seed: int = 0
    n_paths: int = 1
    checkpoint_times: Tuple[float, ...] = ()
    chunk_steps: int = DEFAULT_CHUNK_STEPS

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ModelValidationError(f"dt 須為正有限值，收到 {self.dt}")
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ModelValidationError(f"t_end 須為正有限值，收到 {self.t_end}")
        if self.n_paths < 1:
            raise ModelValidationError(f"n_paths 須 ≥ 1，收到 {self.n_paths}")
        if self.chunk_steps < 1:
            raise ModelValidationError(f"chunk_steps 須 ≥ 1，收到 {self.chunk_steps}")
        times = tuple(float(t) for t in self.checkpoint_times) or (float(self.t_end),)
        if any(b < a for a, b in zip(times, times[1:])):
            raise ModelValidationError(f"checkpoint_times 須遞增：{times}")
        if times[0] < 0 or times[-1] > self.t_end * (1 + 1e-12):
            raise ModelValidationError(f"checkpoint_times 須落在 [0, {self.t_end}]：{times}")
        if _whole_steps(self.t_end, self.dt, "t_end") < 1:
            raise ModelValidationError(f"t_end={self.t_end:g} 小於 dt={self.dt:g}")
        for t in times:
            _whole_steps(t, self.dt, "checkpoint_time")
        object.__setattr__(self, "checkpoint_times", times)

    @property
    def n_steps(self) -> int:
        return _whole_steps(self.t_end, self.dt, "t_end")

    @property
    def checkpoint_steps(self) -> np.ndarray:
        """各輸出時間對應的步數 t/dt。"""
        steps = [_whole_steps(t, self.dt, "checkpoint_time") for t in self.checkpoint_times]
        return np.minimum(np.array(steps, dtype=np.int64), self.n_steps)

    def describe(self) -> dict:
        return {
            "dt": self.dt,
            "t_end": self.t_end,
            "seed": int(self.seed),
            "n_paths": int(self.n_paths),
            "checkpoint_times": list(self.checkpoint_times),
            "n_steps": self.n_steps,
        }


@dataclass(frozen=True)
class EnsembleSnapshot:
    """某時間點的系綜狀態；failed 標記已爆掉並凍結在步前狀態的路徑。"""

    time: float
    momenta: np.ndarray
    positions: Optional[np.ndarray] = None
    failed: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.momenta.shape[0]
        if self.positions is not None and self.positions.shape[0] != n:
            raise ModelValidationError("positions 列數須等於 momenta 列數")
        if self.failed is None:
            object.__setattr__(self, "failed", np.zeros(n, dtype=bool))

    @property
    def n_paths(self) -> int:
        return int(self.momenta.shape[0])

    @property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.momenta, axis=1)

    @property
    def energies(self) -> np.ndarray:
        return lorentz_factor(self.momenta)


@dataclass(frozen=True)
class Trajectory:
    """單路徑在各 checkpoint 的 PhasePoint；爆掉時截斷並附診斷訊息。"""

    points: List[PhasePoint]
    diagnostic: Optional[str] = None

    @property
    def truncated(self) -> bool:
        return self.diagnostic is not None

    @property
    def times(self) -> np.ndarray:
        return np.array([pt.t for pt in self.points])


@dataclass
class _BlockState:
    p: np.ndarray
    x: np.ndarray
    s: np.ndarray
    failed: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _directions(p: np.ndarray, r: np.ndarray) -> np.ndarray:
    """θ = p/r；r < 1e−9 時取第一個標準基底向量。"""
    theta = np.zeros_like(p)
    theta[:, 0] = 1.0
    moving = r >= DEGENERATE_R
    theta[moving] = p[moving] / r[moving, None]
    return theta


def _advance(
    p: np.ndarray,
    x: np.ndarray,
    s: np.ndarray,
    coeffs: CoefficientSet,
    dt: float,
    increments: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """對 (m, d) 批次做一步 EM，回傳新的 (p, x, s)；不檢查有限性。"""
    d = p.shape[1]
    r = np.linalg.norm(p, axis=1)
    b = coeffs.evaluate("b", r)
    f = coeffs.evaluate("f", r)
    eta = coeffs.evaluate("eta", r)
    scale = coeffs.evaluate("sigma", r) / np.sqrt(coeffs.beta * (1.0 + eta**2))

    dW = increments[:, :d]
    dw = increments[:, d]
    noise = dW + (eta * dw)[:, None] * _directions(p, r)
    with np.errstate(all="ignore"):
        p_new = p - (b * dt)[:, None] * p + scale[:, None] * noise
        x_new = x + (f * dt)[:, None] * p
    s_new = s + dt / np.sqrt(1.0 + r**2)
    return p_new, x_new, s_new


def em_step(
    state: PhasePoint,
    coeffs: CoefficientSet,
    dt: Annotated[float, "步長 > 0"],
    noise: NoiseIncrement,
) -> PhasePoint:
    """
    單步 Euler–Maruyama。

    Returns:
        新的 PhasePoint（t + dt，p⁰ 由新的 p 重算）。

    Raises:
        StepRejectedError: 更新結果非有限，pre_step_state 為原狀態。
    """
    if not dt > 0:
        raise ModelValidationError(f"dt 須為正值，收到 {dt}")
    increments = noise.as_row()[None, :]
    if increments.shape[1] != state.d + 1:
        raise ModelValidationError(f"雜訊維度 {increments.shape[1] - 1} 與狀態維度 {state.d} 不符")
    p, x, s = _advance(state.p[None, :], state.x[None, :], np.array([state.s]), coeffs, dt, increments)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(x))):
        raise StepRejectedError(f"t={state.t:.6g} 的 EM 步產生非有限值", pre_step_state=state)
    return PhasePoint(t=state.t + dt, x=x[0], p0=float(lorentz_factor(p[0])), p=p[0], s=float(s[0]))


def integrate_increments(
    p0: Annotated[np.ndarray, "(m, d) 初始動量"],
    coeffs: CoefficientSet,
    dt: Annotated[float, "步長 > 0"],
    increments: Annotated[np.ndarray, "(n_steps, m, d+1) 布朗增量"],
) -> Tuple[np.ndarray, np.ndarray]:
    """
    以外部給定的增量推進 m 條路徑（x₀ = 0），回傳終點的 (p, x)。

    Note:
        與 coarsen_increments 搭配時，不同 dt 的解共用同一條布朗路徑，可直接量強收斂誤差。

    Raises:
        StepRejectedError: 任一路徑產生非有限值。
    """
    if not dt > 0:
        raise ModelValidationError(f"dt 須為正值，收到 {dt}")
    p = np.array(p0, dtype=float)
    if increments.ndim != 3 or increments.shape[1:] != (p.shape[0], p.shape[1] + 1):
        raise ModelValidationError(f"增量 shape {increments.shape} 與動量 {p.shape} 不符")
    x = np.zeros_like(p)
    s = np.zeros(p.shape[0])
    for k, step_noise in enumerate(increments):
        p, x, s = _advance(p, x, s, coeffs, dt, step_noise)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(x))):
            raise StepRejectedError(f"第 {k + 1} 步（t={(k + 1) * dt:.6g}）產生非有限值")
    return p, x


def _run_block(
    p0: np.ndarray,
    x0: np.ndarray,
    stream_ids: np.ndarray,
    coeffs: CoefficientSet,
    cfg: SimConfig,
) -> Tuple[List[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]], dict]:
    """
    模擬一塊路徑，回傳每個 checkpoint 的 (p, x, s, failed) 複本與爆掉路徑的診斷。

    Note:
        爆掉的路徑保留步前狀態並不再更新（凍結），由 failed 標記。
    """
    m, d = p0.shape
    generators = [path_generator(cfg.seed, int(sid)) for sid in stream_ids]
    state = _BlockState(p=p0.copy(), x=x0.copy(), s=np.zeros(m), failed=np.zeros(m, dtype=bool))
    checkpoints = cfg.checkpoint_steps
    records = []
    next_cp = 0

    def record():
        records.append((state.p.copy(), state.x.copy(), state.s.copy(), state.failed.copy()))

    while next_cp < len(checkpoints) and checkpoints[next_cp] == 0:
        record()
        next_cp += 1

    step = 0
    n_steps = cfg.n_steps
    while step < n_steps and next_cp < len(checkpoints):
        chunk = min(cfg.chunk_steps, n_steps - step)
        noise = np.stack([draw_increments(g, chunk, d, cfg.dt) for g in generators], axis=1)
        for k in range(chunk):
            p_new, x_new, s_new = _advance(state.p, state.x, state.s, coeffs, cfg.dt, noise[k])
            ok = np.all(np.isfinite(p_new), axis=1) & np.all(np.isfinite(x_new), axis=1)
            newly_failed = ~ok & ~state.failed
            for i in np.flatnonzero(newly_failed):
                state.diagnostics[int(stream_ids[i])] = (
                    f"path {int(stream_ids[i])} 在 t={step * cfg.dt:.6g} 爆掉，凍結於步前狀態"
                )
            state.failed |= ~ok
            live = ~state.failed
            state.p[live] = p_new[live]
            state.x[live] = x_new[live]
            state.s[live] = s_new[live]
            step += 1
            while next_cp < len(checkpoints) and checkpoints[next_cp] == step:
                record()
                next_cp += 1
    return records, state.diagnostics


def simulate_trajectory(
    init: PhasePoint,
    coeffs: CoefficientSet,
    cfg: SimConfig,
    stream_id: Annotated[int, "使用的子流編號，與系綜的路徑編號一致"] = 0,
) -> Trajectory:
    """
    單路徑模擬，在 cfg.checkpoint_times 輸出 PhasePoint。

    Returns:
        Trajectory；若中途爆掉，points 只含爆掉前的 checkpoint，diagnostic 說明時間點。
    """
    records, diagnostics = _run_block(
        init.p[None, :], init.x[None, :], np.array([stream_id]), coeffs, cfg
    )
    points = []
    for t_k, (p, x, s, failed) in zip(cfg.checkpoint_times, records):
        if failed[0]:
            break
        points.append(
            PhasePoint(
                t=init.t + t_k,
                x=x[0],
                p0=float(lorentz_factor(p[0])),
                p=p[0],
                s=init.s + float(s[0]),
            )
        )
    diagnostic = diagnostics.get(int(stream_id))
    if diagnostic:
        logger.warning(f"軌跡截斷：{diagnostic}")
    return Trajectory(points=points, diagnostic=diagnostic)


def simulate_ensemble(
    inits: Sequence[PhasePoint],
    coeffs: CoefficientSet,
    cfg: SimConfig,
    stream_ids: Annotated[Optional[Sequence[int]], "各路徑的子流編號；None 時為 0..n−1"] = None,
    block_size: Annotated[int, "每塊路徑數"] = DEFAULT_BLOCK_SIZE,
    workers: Annotated[int, "執行緒數；1 為循序"] = 1,
    record_positions: bool = True,
) -> List[EnsembleSnapshot]:
    """
    向量化系綜模擬。

    Args:
        inits: 初始狀態；只給一個時複製成 cfg.n_paths 條。
        coeffs: 模型。
        cfg: 模擬設定。
        stream_ids: 子流編號，決定每條路徑的亂數；同一編號永遠得到同一條雜訊。
        block_size: 分塊大小（只影響記憶體與平行粒度）。
        workers: ThreadPoolExecutor 的 worker 數；結果與 worker 數無關。
        record_positions: 是否輸出位置。

    Returns:
        每個 checkpoint 一個 EnsembleSnapshot，failed 欄位標記爆掉的路徑。

    Raises:
        ModelValidationError: inits 為空、初始時間不一致，或 stream_ids 長度不符或重複。
    """
    inits = list(inits)
    if not inits:
        raise ModelValidationError("inits 不可為空")
    if len(inits) == 1 and cfg.n_paths > 1:
        inits = inits * cfg.n_paths
    n = len(inits)
    ids = np.arange(n) if stream_ids is None else np.asarray(stream_ids, dtype=np.int64)
    if ids.shape != (n,):
        raise ModelValidationError(f"stream_ids 長度 {ids.shape} 與路徑數 {n} 不符")
    if len(np.unique(ids)) != n:
        raise ModelValidationError("stream_ids 不可重複，否則路徑不獨立")

    p0 = np.stack([pt.p for pt in inits])
    x0 = np.stack([pt.x for pt in inits])
    starts = np.array([pt.t for pt in inits])
    if np.any(starts != starts[0]):
        raise ModelValidationError(
            f"系綜的初始時間須一致，收到 {np.unique(starts).size} 種（{starts.min():g} … {starts.max():g}）"
        )
    t0 = float(starts[0])
    blocks = [slice(i, min(i + block_size, n)) for i in range(0, n, block_size)]
    logger.info(
        f"系綜模擬開始：model={coeffs.name}, paths={n}, d={p0.shape[1]}, dt={cfg.dt}, "
        f"t_end={cfg.t_end}, blocks={len(blocks)}, workers={workers}"
    )

    def run(sl: slice):
        return _run_block(p0[sl], x0[sl], ids[sl], coeffs, cfg)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, blocks))
    else:
        results = [run(sl) for sl in blocks]

    diagnostics = {}
    for _, diag in results:
        diagnostics.update(diag)
    snapshots = []
    for j, t_k in enumerate(cfg.checkpoint_times):
        momenta = np.concatenate([rec[j][0] for rec, _ in results])
        positions = np.concatenate([rec[j][1] for rec, _ in results]) if record_positions else None
        failed = np.concatenate([rec[j][3] for rec, _ in results])
        snapshots.append(
            EnsembleSnapshot(time=t0 + t_k, momenta=momenta, positions=positions, failed=failed)
        )

    if diagnostics:
        logger.warning(f"{len(diagnostics)} 條路徑爆掉並被凍結，例如：{next(iter(diagnostics.values()))}")
    logger.info(f"系綜模擬完成：{len(snapshots)} 個 snapshot")
    return snapshots


def ou_stationary_variance(b: float, sigma: float, beta: float) -> float:
    """常數係數 OU 每個分量的平穩變異數 σ²/(2bβ)。"""
    return sigma**2 / (2.0 * b * beta)


def em_stationary_variance(b: float, sigma: float, beta: float, dt: float) -> float:
    """EM 離散鏈的平穩變異數 σ²/(βb(2 − b·dt))，dt → 0 時趨近 ou_stationary_variance。"""
    return sigma**2 / (beta * b * (2.0 - b * dt))
