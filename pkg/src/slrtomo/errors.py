"""Exception types shared across the package."""


class SlrtomoError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(SlrtomoError, ValueError):
    """Input data violates a structural invariant (shape, sign, range)."""


class ParseError(ValidationError):
    """A file could not be parsed; message carries file name and line."""


class GenerationError(SlrtomoError, RuntimeError):
    """Synthetic instance generation could not satisfy the scale relation."""


class RepairError(SlrtomoError, RuntimeError):
    """Anomaly repair has no clean intervals to interpolate from."""


class DivergenceError(SlrtomoError, RuntimeError):
    """Solver produced non-finite values or a runaway residual."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class MetricError(SlrtomoError, ValueError):
    """A metric is undefined (zero denominator / empty index set)."""


class FoldInfeasibleError(SlrtomoError, RuntimeError):
    """A CV fold leaves too few training links (S > M_train + 1)."""
