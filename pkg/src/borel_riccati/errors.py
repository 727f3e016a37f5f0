"""Exception hierarchy for the pipeline.

Every stage raises a subclass of :class:`BorelRiccatiError` so callers (and the
CLI) can report which stage failed without string matching.
"""

from __future__ import annotations


class BorelRiccatiError(Exception):
    """Base class for all library errors."""


# -- field ------------------------------------------------------------------

class DivisionByZeroElem(BorelRiccatiError):
    """Division by a field element whose norm is identically zero."""


class PoleHit(BorelRiccatiError):
    """Numeric evaluation requested at (or too close to) a pole."""


class BranchAmbiguous(BorelRiccatiError):
    """Square-root continuation passed too close to a turning point."""


# -- formal -----------------------------------------------------------------

class DegenerateDiscriminant(BorelRiccatiError):
    """The leading-order discriminant vanishes identically."""


class NoMinusSolution(BorelRiccatiError):
    """The '-' family does not exist (leading quadratic coefficient is 0)."""


class EvaluationFailed(BorelRiccatiError):
    """A coefficient could not be evaluated at the requested point."""


# -- geometry ---------------------------------------------------------------

class RootFindingFailed(BorelRiccatiError):
    """Turning-point polynomial roots could not be refined."""


class PathThroughSingularity(BorelRiccatiError):
    """An integration path passes through a turning point or pole."""


class NoHalfStrip(BorelRiccatiError):
    """The center ray is finite, so no halfstrip domain exists."""


# -- borel ------------------------------------------------------------------

class InsufficientFormalOrder(BorelRiccatiError):
    """Standardization needs formal coefficients at least through order 2."""


class HalfstripMissing(BorelRiccatiError):
    """No validated halfstrip covers the requested grid."""


class LatticeMismatch(BorelRiccatiError):
    """Operands sampled on different lattices."""


class GridTooShort(BorelRiccatiError):
    """The z-lattice does not cover the diagonals needed by the xi range."""


class NoConvergence(BorelRiccatiError):
    """Successive approximations did not reach the requested tolerance."""

    def __init__(self, message: str, growth_trend=None):
        super().__init__(message)
        self.growth_trend = growth_trend


# -- resum ------------------------------------------------------------------

class OutsideBorelDisc(BorelRiccatiError):
    """Laplace point lies outside the accepted Borel disc (tail diverges)."""


class ContourDivergence(BorelRiccatiError):
    """The Borel contour quadrature failed its truncation-convergence check."""


class PointOffGrid(BorelRiccatiError):
    """Evaluation point maps outside the covered Borel lattice."""


class HypothesisFailed(BorelRiccatiError):
    """A theorem hypothesis failed for one of the requested directions."""

    def __init__(self, message: str, theta: float | None = None, report=None):
        super().__init__(message)
        self.theta = theta
        self.report = report


# -- cli --------------------------------------------------------------------

class ConfigParseError(BorelRiccatiError):
    """Malformed run configuration; carries location context when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column
