"""Exception hierarchy shared by all modules."""


class DtdCvaError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(DtdCvaError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NotPositiveDefiniteError(DtdCvaError, ValueError):
    """Cholesky factorisation failed; ``pivot`` is the failing row index."""

    def __init__(self, pivot: int, value: float):
        self.pivot = pivot
        self.value = value
        super().__init__(f"matrix is not positive definite: pivot {pivot} has value {value:.6g}")


class ArbitrageError(DtdCvaError, ValueError):
    """CDS quotes cannot be fitted by a monotone default-probability curve."""


class DegenerateCurveError(DtdCvaError, ValueError):
    """A default-probability curve is zero, one, or flat where it must increase."""


class ValidationError(DtdCvaError, ValueError):
    """Input data or configuration failed validation."""


class ComputationError(DtdCvaError, RuntimeError):
    """A numerical routine failed during a simulation run."""
