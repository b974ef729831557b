"""Exception and warning types shared across the package."""


class FedosovKitError(Exception):
    """Base class for all package errors."""


class DomainError(FedosovKitError, ValueError):
    """A value or expression is outside the domain where it is defined.

    Attributes:
        subtree: The offending expression or point, when known.
    """

    def __init__(self, message, subtree=None):
        super().__init__(message)
        self.subtree = subtree


class ParseError(FedosovKitError, ValueError):
    """Malformed prefix-syntax input.

    Attributes:
        position: Character offset where parsing failed.
    """

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownVariableError(FedosovKitError, LookupError):
    pass


class OpaqueDerivativeError(FedosovKitError):
    """An opaque symbol was differentiated without a registered rule."""


class NonCanonicalError(FedosovKitError, ValueError):
    """A coordinate map failed to preserve the symplectic form."""


class FlatnessError(FedosovKitError, ValueError):
    """A connection was required to be flat but its curvature is nonzero."""


class GradingError(FedosovKitError, ArithmeticError):
    """A negative power of hbar survived where it must cancel."""


class GridError(FedosovKitError, ValueError):
    pass


class NormalizationError(FedosovKitError, ValueError):
    pass


class NotPureError(FedosovKitError, ValueError):
    pass


class BoundaryMassWarning(UserWarning):
    pass


class NormalizationWarning(UserWarning):
    pass


class ResolutionWarning(UserWarning):
    pass


class CutoffWarning(UserWarning):
    pass


class PerturbationSizeWarning(UserWarning):
    pass


class SecularTermWarning(UserWarning):
    pass
