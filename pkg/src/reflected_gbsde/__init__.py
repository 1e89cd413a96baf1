"""Sublinear G-expectations on a lattice and reflected G-BSDEs whose
generators satisfy a beta-order Mao condition in ``y``."""
from .errors import (
    BlowUpError,
    ConvergenceFailure,
    GBSDEError,
    InternalInconsistency,
    NumericalFailure,
    PreconditionError,
    RefusalError,
)
from .gexpect import Lattice, VolBand, g_expectation, solve_g_heat
from .gbsde import SolutionSurface, comparison_gbsde, k_stats, solve_gbsde
from .moduli import GeneratorSpec, MaoModulus, make_modulus
from .rgbsde import (
    Obstacle,
    ReflectedSurface,
    apriori_norms,
    comparison_reflected,
    martingale_condition_check,
    solve_penalized,
    solve_picard,
    solve_reflected_lipschitz,
    stability_check,
    uniqueness_crosscheck,
)

__all__ = [
    "BlowUpError",
    "ConvergenceFailure",
    "GBSDEError",
    "GeneratorSpec",
    "InternalInconsistency",
    "Lattice",
    "MaoModulus",
    "NumericalFailure",
    "Obstacle",
    "PreconditionError",
    "ReflectedSurface",
    "RefusalError",
    "SolutionSurface",
    "VolBand",
    "apriori_norms",
    "comparison_gbsde",
    "comparison_reflected",
    "g_expectation",
    "k_stats",
    "make_modulus",
    "martingale_condition_check",
    "solve_g_heat",
    "solve_gbsde",
    "solve_penalized",
    "solve_picard",
    "solve_reflected_lipschitz",
    "stability_check",
    "uniqueness_crosscheck",
]

__version__ = "0.1.0"
