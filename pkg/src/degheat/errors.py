"""Exception hierarchy shared by all modules."""


class DegheatError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameterError(DegheatError, ValueError):
    pass


class MeshMismatchError(DegheatError, ValueError):
    pass


class QuadratureDivergenceError(DegheatError, ArithmeticError):
    pass


class UnsupportedRegimeError(DegheatError, ValueError):
    """Raised for alpha outside the weakly degenerate range [0, 1)."""


class HypothesisViolationError(DegheatError, ValueError):
    pass


class EigenSolveError(DegheatError, RuntimeError):
    pass


class WeightSingularityError(DegheatError, ValueError):
    pass


class BoundaryConditionError(DegheatError, ValueError):
    pass


class InvalidProblemError(DegheatError, ValueError):
    pass


class SolverError(DegheatError, RuntimeError):
    pass


class AdmissibilityError(DegheatError, ValueError):
    """Carleman parameters outside the admissible range.

    ``report`` holds the full inequality-by-inequality validation record.
    """

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


class ConfigError(DegheatError, ValueError):
    pass
