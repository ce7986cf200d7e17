"""Exception hierarchy for Fillscape.

Every error carries the process exit code the CLI maps it to:
2 for usage and parse problems, 3 for solver failures.
"""

from typing import Any, Optional, Tuple


class FillscapeError(Exception):
    """Base class for all laboratory errors."""

    exit_code = 2


class ArgumentError(FillscapeError, ValueError):
    """Invalid argument: dimension mismatch, out-of-range parameter."""


class ConfigError(ArgumentError):
    """Malformed or unknown configuration entry."""


class UnboundedBallError(ArgumentError):
    """Polytope facets do not span, so the unit ball is unbounded."""


class DegenerateTangentError(ArgumentError):
    """Tangent basis is rank deficient."""


class UnsupportedDimensionError(ArgumentError):
    """Requested dimension is outside the supported range."""


class ChartError(ArgumentError):
    """Point lies outside the coordinate chart."""


class SurfaceError(ArgumentError):
    """Simplicial surface violates its structural invariants."""


class SolverError(FillscapeError, RuntimeError):
    """Base class for numerical solver failures."""

    exit_code = 3


class ConvergenceError(SolverError):
    """Iteration cap exceeded; the last iterate is kept for inspection."""

    def __init__(self, message: str, last_iterate: Any = None):
        super().__init__(message)
        self.last_iterate = last_iterate


class NonconvergenceError(SolverError):
    """No shooting start reached the target within tolerance."""

    def __init__(self, message: str, best_residual: float = float('inf'),
                 pair: Optional[Tuple[Any, Any]] = None):
        super().__init__(message)
        self.best_residual = best_residual
        self.pair = pair


class CollarError(SolverError):
    """Metric tensor requested outside the domain collar."""


class DivergenceError(SolverError):
    """Iterate escaped the admissible chart region."""
