"""Exception hierarchy shared by all modules."""


class QDimRedError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(QDimRedError, ValueError):
    """Inputs have incompatible shapes, alphabets or transition structure."""


class PreconditionError(QDimRedError, ValueError):
    """An input violates a documented precondition (e.g. not normalized)."""


class InvalidStateError(QDimRedError, ValueError):
    """The tensor does not describe a valid state (zero norm, zero eigenvalue)."""


class DomainError(QDimRedError, ValueError):
    """A bound or formula was evaluated outside its domain of validity."""


class ResourceError(QDimRedError, ValueError):
    """The requested brute-force computation is too large."""


class ImpossibleHistoryError(QDimRedError, ValueError):
    """A conditioning past has zero probability under the model."""


class NumericalError(QDimRedError, ArithmeticError):
    """A numerical routine failed (quadrature, rank deficiency, underflow)."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class ConvergenceError(QDimRedError, RuntimeError):
    """An iterative routine stopped before reaching its tolerance.

    ``residual`` holds the last residual (eigen solves) or best error
    (variational truncation); ``result`` optionally holds the best partial
    result so callers can still inspect it.
    """

    def __init__(self, message, residual=None, result=None):
        super().__init__(message)
        self.residual = residual
        self.result = result
