"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent or physically meaningless configuration values."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class EvaluationError(RuntimeError):
    """A field evaluation failed (e.g. receiver on the source trajectory)."""


class WindowCoverageError(ValueError):
    """Analysis window extends beyond the recorded time span."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance.

    Carries the achieved error estimate so callers can decide whether the
    partial result is still usable.
    """

    def __init__(self, message, estimate=None, value=None):
        super().__init__(message)
        self.estimate = estimate
        self.value = value


class LCurveError(RuntimeError):
    """No usable corner found on the regularization L-curve."""


class KernelCollarSignal(Exception):
    """Control signal: a kernel argument fell inside the singular collar.

    Not a failure.  The quadrature engine catches this and clamps the
    offending squared wavenumbers to the collar edge; it can only trigger
    if a quadrature node lands essentially on a band-edge singularity.
    """

    def __init__(self, k2_squared):
        super().__init__(f"2D wavenumber squared {k2_squared!r} inside singular collar")
        self.k2_squared = k2_squared
