"""系統 (⋆) 的 Euler–Maruyama 模擬與逐路徑亂數子流。"""

from simulation.euler_maruyama import (
    EnsembleSnapshot,
    SimConfig,
    Trajectory,
    em_step,
    ou_stationary_variance,
    simulate_ensemble,
    simulate_trajectory,
)
from simulation.noise import NoiseIncrement, path_generator

__all__ = [
    "EnsembleSnapshot",
    "NoiseIncrement",
    "SimConfig",
    "Trajectory",
    "em_step",
    "ou_stationary_variance",
    "path_generator",
    "simulate_ensemble",
    "simulate_trajectory",
]
