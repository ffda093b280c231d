"""Exception hierarchy shared by every module."""


class RotundError(Exception):
    """Base class for all library errors."""


class DomainError(RotundError, ValueError):
    """A point lies outside the set where an operation is defined."""


class DimensionError(RotundError, ValueError):
    pass


class UnknownNameError(RotundError, KeyError):
    pass


class NoConjugateError(RotundError, NotImplementedError):
    """Raised by integrands that carry no closed-form conjugate."""


class IncompatibleSpacesError(RotundError, ValueError):
    pass


class DualDomainViolation(DomainError):
    """The dual argument left the domain of the conjugate at some cell."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class RankDeficientError(RotundError, ValueError):
    pass


class InfeasibleError(RotundError):
    pass


class ConvergenceError(RotundError):
    pass


class CrossCheckError(RotundError):
    """Two independent numerical routes disagreed beyond tolerance."""


class QuadratureError(RotundError):
    def __init__(self, message, error_estimate=None):
        super().__init__(message)
        self.error_estimate = error_estimate


class HypothesisViolation(RotundError, ValueError):
    """A check was asked to run outside its hypotheses."""


class LevelSetExitError(RotundError, ValueError):
    pass


class SamplingError(RotundError):
    pass
