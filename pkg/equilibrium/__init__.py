"""
不變測度 ν：勢函數、正規化、抽樣與不變性檢查。

- quadrature: 逐格 Romberg 與 Richardson 梯形
- measure: potentials、build_measure、measure_bounds_report
- sampler: sample_equilibrium
- stationarity: stationarity_residual 與測試函數
"""

from equilibrium.measure import EquilibriumMeasure, build_measure, measure_bounds_report, potentials
from equilibrium.sampler import sample_equilibrium
from equilibrium.stationarity import Observable, radial_generator_apply, stationarity_residual

__all__ = [
    "EquilibriumMeasure",
    "Observable",
    "build_measure",
    "measure_bounds_report",
    "potentials",
    "radial_generator_apply",
    "sample_equilibrium",
    "stationarity_residual",
]
