"""Exception hierarchy shared by all modules."""


class NepError(Exception):
    """Base class for every error raised by this package."""


class ModelNotFoundError(NepError, KeyError):
    pass


class ModelDefinitionError(NepError, ValueError):
    """A nonlinearity violates f > 0 or f' >= 0 on its declared range."""


class ConventionError(NepError, ValueError):
    pass


class DomainError(NepError, ValueError):
    """Argument outside the range where the quantity is defined."""


class GreensFunctionError(NepError, ValueError):
    """The Robin Green's function does not exist (2 + alpha*L == 0)."""


class NoMinimalSolutionError(NepError, RuntimeError):
    pass


class TangencyNotFoundError(NepError, RuntimeError):
    pass


class DerivativeSingularError(NepError, ValueError):
    pass


class RegimeError(NepError, ValueError):
    """Energy level and trajectory class do not fit together."""


class BlowupError(NepError, OverflowError):
    def __init__(self, message: str, x: float):
        super().__init__(message)
        self.x = x


class WeightError(NepError, ValueError):
    pass


class SeedRejectedError(NepError, RuntimeError):
    pass


class ExpressionError(NepError, ValueError):
    pass
