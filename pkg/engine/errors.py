"""
Non-Conservative Equilibrium Propagation Engine

Exception hierarchy shared by the library and the CLI.

Every error raised on purpose by the engine derives from EngineError, so
app.py can map whole families onto exit codes:
- ConfigError / IdxParseError -> exit code 2
- DivergenceError (and DivergenceAbort) -> exit code 3
"""

from typing import Dict, Optional


class EngineError(Exception):
    """Base class for engine errors."""


class ConfigError(EngineError, ValueError):
    """Invalid configuration, dimension mismatch or missing input file."""


class DivergenceError(EngineError, RuntimeError):
    """State left the finite region (|x_i| > bound or non-finite) during integration."""

    def __init__(self, message: str, *, step: Optional[int] = None):
        super().__init__(message)
        self.step = step  # Euler step at which the guard fired


class DivergenceAbort(DivergenceError):
    """Too many samples of a training batch diverged."""

    def __init__(self, message: str, *, summary: Optional[Dict[str, int]] = None,
                 step: Optional[int] = None):
        super().__init__(message, step=step)
        self.summary = summary or {}  # phase -> number of diverged samples


class ContractViolation(EngineError, ValueError):
    """A model was asked for something its structure does not support (e.g. energy of asymmetric J)."""


class DegenerateParameterization(EngineError, ValueError):
    """Fixed-ratio component with zero Frobenius norm."""


class DegenerateMetric(EngineError, ValueError):
    """Asymmetry ratio with a zero denominator."""


class OracleUnavailable(EngineError, RuntimeError):
    """Ground-truth gradient cannot be computed reliably for this instance."""


class SeriesDivergence(OracleUnavailable):
    """A recursion or Neumann series that must contract does not."""


class IdxParseError(EngineError, ValueError):
    """Malformed IDX file."""


class IdxMagicError(IdxParseError):
    """Magic number does not match the requested IDX kind."""


class IdxTruncatedError(IdxParseError):
    """File ends before the declared payload."""


class IdxDimensionError(IdxParseError):
    """Declared dimensions are inconsistent with the requested kind or companion file."""
