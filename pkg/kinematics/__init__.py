"""Minkowski 運動學：動量提升、球座標與偽範數關係。"""

from kinematics.phase_space import (
    MomentumState,
    PhasePoint,
    from_spherical,
    lift,
    phase_point_from_momentum,
    to_spherical,
)

__all__ = [
    "MomentumState",
    "PhasePoint",
    "from_spherical",
    "lift",
    "phase_point_from_momentum",
    "to_spherical",
]
