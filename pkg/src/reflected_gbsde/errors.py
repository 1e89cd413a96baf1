"""Exception hierarchy.

The CLI maps each family to an exit code: precondition problems to 1,
numerical failures to 2, convergence failures to 3.
"""


class GBSDEError(Exception):
    """Base class for every error raised by this package."""


class PreconditionError(GBSDEError, ValueError):
    """Inputs violate a documented precondition (bad band, bad modulus, ...)."""


class RefusalError(PreconditionError):
    """A brute-force routine was asked for a size it will not enumerate."""


class NumericalFailure(GBSDEError, ArithmeticError):
    """CFL violation, non-finite values, or a broken monotonicity guarantee."""


class ConvergenceFailure(GBSDEError):
    """An iteration hit its budget without meeting its stop rule.

    Attributes
    ----------
    trace : list of float
        The per-iteration deltas observed before giving up.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class BlowUpError(NumericalFailure):
    """The Bihari majorant exceeded its overflow guard."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class InternalInconsistency(GBSDEError, AssertionError):
    """A property that construction should have guaranteed was violated."""
