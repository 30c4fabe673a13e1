"""Exception hierarchy shared across the package.

Three broad families matter to callers: configuration problems (bad
arguments, unusable option combinations), data problems (malformed or
inconsistent input), and numerical failures (estimation that cannot be
completed on the given data).  The command line tool maps these families
to distinct exit codes.
"""

from __future__ import annotations


class SelvarError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SelvarError):
    """Invalid configuration: bad flag values, empty grids, unusable ranges."""


class RefusesLargeP(ConfigError):
    """Exhaustive enumeration was requested for a dimension it cannot handle."""


class DataError(SelvarError):
    """Malformed or inconsistent input data."""


class ParseError(DataError):
    """CSV cell that could not be parsed; carries 1-based coordinates."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        super().__init__(message)
        self.row = row
        self.col = col


class InsufficientClassData(DataError):
    """A class label has fewer observations than the estimator requires."""


class NumericalError(SelvarError):
    """Estimation failed for numerical reasons."""


class DegenerateCovariance(NumericalError):
    """A covariance estimate collapsed (zero variance, non-PD matrix)."""


class EmptyComponent(NumericalError):
    """A mixture component lost essentially all responsibility mass."""


class SingularInput(NumericalError):
    """An input matrix is singular where an invertible one is required."""


class RankDeficient(NumericalError):
    """Regression design matrix does not have full column rank."""


class NotConverged(NumericalError):
    """Iteration budget exhausted before the convergence test was met.

    Carries the last iterate and the residual at that iterate so callers
    can inspect how close the solver got.
    """

    def __init__(self, message: str, iterate=None, residual: float | None = None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class SelectionFailed(NumericalError):
    """Model selection could not score any candidate model."""
