from analysis.decay import DecayReport, DensityEvolution, decay_report, evolve_density, gaussian_bump
from analysis.generator import (
    GapResult,
    RadialOperator,
    carre_du_champ,
    discretize_generator,
    smallest_eigenvalues,
    spectral_gap,
)
from analysis.lyapunov import LyapunovCertificate, SearchBox, drift_inequality_margin, lyapunov_certificate
from analysis.poincare import PoincareBound, poincare_c2, poincare_constant

__all__ = [
    "DecayReport",
    "DensityEvolution",
    "GapResult",
    "LyapunovCertificate",
    "PoincareBound",
    "RadialOperator",
    "SearchBox",
    "carre_du_champ",
    "decay_report",
    "discretize_generator",
    "drift_inequality_margin",
    "evolve_density",
    "gaussian_bump",
    "lyapunov_certificate",
    "poincare_c2",
    "poincare_constant",
    "smallest_eigenvalues",
    "spectral_gap",
]
