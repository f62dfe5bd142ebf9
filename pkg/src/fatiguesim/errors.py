"""Exception types shared across the package."""


class FatigueSimError(Exception):
    """Base class for all errors raised by fatiguesim."""


class TraceFormatError(FatigueSimError):
    """A trace or bound-table file could not be parsed.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnboundedDofError(FatigueSimError, ValueError):
    """A DoF with a zero maximum-torque bound was used for load normalization."""


class SimulationUnstableError(FatigueSimError):
    """The rigid-body integration blew up (velocity limit exceeded)."""
