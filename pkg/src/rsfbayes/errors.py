"""Exception hierarchy. CLI exit codes hang off these classes."""
from __future__ import annotations


class RsfError(Exception):
    """Base class for every error raised by rsfbayes."""


class ConfigError(RsfError, ValueError):
    """A configuration value violates its contract."""


class ModelDomainError(RsfError, ArithmeticError):
    """The state left the region where the friction law is defined."""

    def __init__(self, message, *, mu=None, theta=None, t=None, d_c=None):
        super().__init__(message)
        self.mu = mu
        self.theta = theta
        self.t = t
        self.d_c = d_c


class IntegrationError(RsfError, RuntimeError):
    """The adaptive integrator could not continue (step underflow, step limit)."""

    def __init__(self, message, *, t=None, d_c=None):
        super().__init__(message)
        self.t = t
        self.d_c = d_c


class SampleRangeError(RsfError, ValueError):
    """Interpolation was requested outside the trajectory's time span."""


class InversionError(RsfError, RuntimeError):
    """Fitting, posterior construction or sampling failed."""


class DegenerateNoiseError(InversionError):
    """The residuals are identically zero so no noise level can be estimated."""


class DataFormatError(RsfError, ValueError):
    """A data file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message, *, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class SchemaVersionError(DataFormatError):
    """A persisted artifact was written with an unsupported schema version."""
