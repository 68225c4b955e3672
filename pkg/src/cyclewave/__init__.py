"""Travelling waves and heteroclinic networks in cyclic competition models."""

from .cycles import (
    SubcycleSet,
    alliance_possible,
    enumerate_subcycles,
    full_length_cycle_count,
    subcycle_count,
)
from .errors import (
    BlowUpError,
    BracketError,
    CyclewaveError,
    NewtonError,
    NumericalError,
    ValidationError,
)
from .linear import (
    EquilibriumSpectrum,
    HopfPoint,
    RegionLabel,
    bd_curve,
    bd_locus,
    classify_region,
    coexistence_eigenvector,
    coexistence_spectrum,
    detect_hopf,
    hopf_point,
    onaxis_spectrum,
    resonance_locus,
    resonance_root,
    resonance_value,
)
from .model import Equilibria, ModelParams, equilibria
from .returnmap import (
    FixedPointSolution,
    OrbitFlipCurve,
    ReturnMapConstants,
    ReturnTimePrediction,
    asymptotic_coords,
    asymptotic_return_time,
    bifurcation_residual,
    orbit_flip_curve,
    random_constants,
    solve_four_saddle_fixed_point,
    solve_spiral_fixed_point,
    solve_two_saddle_fixed_point,
    spiral_phase_constant,
)

__version__ = "0.1.0"

__all__ = [
    "BlowUpError",
    "BracketError",
    "CyclewaveError",
    "Equilibria",
    "EquilibriumSpectrum",
    "FixedPointSolution",
    "HopfPoint",
    "ModelParams",
    "NewtonError",
    "NumericalError",
    "OrbitFlipCurve",
    "RegionLabel",
    "ReturnMapConstants",
    "ReturnTimePrediction",
    "SubcycleSet",
    "ValidationError",
    "alliance_possible",
    "asymptotic_coords",
    "asymptotic_return_time",
    "bd_curve",
    "bd_locus",
    "bifurcation_residual",
    "classify_region",
    "coexistence_eigenvector",
    "coexistence_spectrum",
    "detect_hopf",
    "enumerate_subcycles",
    "equilibria",
    "full_length_cycle_count",
    "hopf_point",
    "onaxis_spectrum",
    "orbit_flip_curve",
    "random_constants",
    "resonance_locus",
    "resonance_root",
    "resonance_value",
    "solve_four_saddle_fixed_point",
    "solve_spiral_fixed_point",
    "solve_two_saddle_fixed_point",
    "spiral_phase_constant",
    "subcycle_count",
    "__version__",
]
