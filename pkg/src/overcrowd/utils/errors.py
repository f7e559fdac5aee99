from __future__ import annotations

# Exit codes of the command line contract
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_PRECONDITION = 4
EXIT_INVARIANT = 5


class OvercrowdError(Exception):
    """Base error. Subclasses set the CLI exit code."""
    exit_code: int = EXIT_NUMERIC

    def to_dict(self) -> dict:
        """Machine readable error record (written to stderr as JSON by the CLI)."""
        return {"error": type(self).__name__, "message": str(self)}


# Configuration errors

class ConfigError(OvercrowdError):
    """Invalid, incomplete or unreadable experiment configuration."""
    exit_code = EXIT_CONFIG

    def __init__(self, message: str, keys: list[str] = None):
        super().__init__(message)
        self.keys = keys or []

    def to_dict(self) -> dict:
        return {**super().to_dict(), "keys": self.keys}


# Numeric errors

class DivergentMoment(OvercrowdError):
    """A moment is infinite or its quadrature tail can't be controlled."""


class OrderTooLarge(OvercrowdError):
    """A moment quantity overflows the working float range."""


class QuadratureFailure(OvercrowdError):
    """Adaptive quadrature did not reach the requested tolerance."""


class NotPSD(OvercrowdError):
    """A covariance matrix failed the pivoted Cholesky check."""


class GridTooLarge(OvercrowdError):
    """A dense grid or matrix exceeds the configured size limit."""


class SamplingUnsupported(OvercrowdError):
    """The measure can't be sampled by the requested method."""


class NoConvergence(OvercrowdError):
    """Refinement did not stabilize."""


class DegenerateCell(OvercrowdError):
    """A marching squares cell has all corners at zero."""


class InfeasibleCalibration(OvercrowdError):
    """No constant satisfies the calibration sweep."""


# Precondition errors

class PreconditionFailed(OvercrowdError):
    """A named hypothesis of a bound or certificate does not hold."""
    exit_code = EXIT_PRECONDITION

    def __init__(self, precondition: str, message: str = "", margin: float = None):
        super().__init__(message or f"precondition '{precondition}' failed")
        self.precondition = precondition
        self.margin = margin

    def to_dict(self) -> dict:
        return {**super().to_dict(), "precondition": self.precondition, "margin": self.margin}


class AssumptionViolated(PreconditionFailed):
    """The spectral measure has no absolutely continuous part."""

    def __init__(self, message: str = ""):
        super().__init__("assumption_a1", message or "spectral measure has no absolutely continuous part")


class EmptySubset(PreconditionFailed):
    def __init__(self, message: str = ""):
        super().__init__("subset_measure_positive", message or "subset has zero length")


class LineCountOverflow(PreconditionFailed):
    def __init__(self, message: str = ""):
        super().__init__("line_count", message or "too many separated lines to enumerate")


class UnknownRow(PreconditionFailed):
    def __init__(self, row: str):
        super().__init__("regime_row", f"unknown regime row: {row}")


# Invariant errors

class CertificateFalsified(OvercrowdError):
    """A deterministic certificate returned a violated conclusion."""
    exit_code = EXIT_INVARIANT

    def __init__(self, message: str, details: dict = None):
        super().__init__(message)
        self.details = details or {}

    def to_dict(self) -> dict:
        return {**super().to_dict(), "details": self.details}
