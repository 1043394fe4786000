"""Exception hierarchy.

``SolverError`` subclasses are mathematical failures (CLI exit code 2);
``ConfigError`` is an input problem (exit code 1).
"""


class QPResponseError(Exception):
    """Base class for all package errors."""


class ConfigError(QPResponseError, ValueError):
    """Malformed or out-of-range input."""


class TruncationMismatch(QPResponseError, ValueError):
    """Operands live on different truncated spaces."""


class SolverError(QPResponseError):
    """A mathematical hypothesis failed or an iteration did not converge."""


class ResonantMode(SolverError):
    def __init__(self, k, value):
        self.k = tuple(int(i) for i in k)
        self.value = value
        super().__init__(f"resonant mode k={self.k}: |k.omega| = {value:.3e}")


class NonZeroAverage(SolverError):
    pass


class ZeroBeta(SolverError):
    pass


class ConeViolation(SolverError):
    pass


class SpectrumOnAxis(SolverError):
    pass


class OscillatorConditionViolated(SolverError):
    pass


class NoRealBranch(SolverError):
    pass


class NewtonDiverged(SolverError):
    pass


class NoContraction(SolverError):
    pass


class MaxIterExceeded(SolverError):
    pass


class G1Degenerate(SolverError):
    pass


class RootTrackingAmbiguous(SolverError):
    pass


class StepTooLarge(SolverError):
    pass
