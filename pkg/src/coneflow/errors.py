"""Exception types shared across the package.

Every failure mode that callers are expected to catch has its own class;
all of them derive from :class:`ConeflowError` so a bare ``except
ConeflowError`` catches anything this library raises deliberately.
"""

from __future__ import annotations


class ConeflowError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateSystem(ConeflowError):
    """Least-squares matrix is rank deficient at the working tolerance."""


class ExprSyntaxError(ConeflowError):
    """Malformed expression source; carries the character offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnknownIdentifier(ConeflowError):
    """Identifier is neither a state variable, declared parameter, nor function."""


class NumericError(ConeflowError):
    """Expression evaluation produced a non-finite value or hit a domain error."""


class NotPointed(ConeflowError):
    """Facet matrix admits a nonzero kernel vector; carries that certificate."""

    def __init__(self, certificate):
        super().__init__(f"cone is not pointed; kernel direction {certificate}")
        self.certificate = certificate


class NotSolid(ConeflowError):
    """No strictly feasible interior point exists for the facet system."""


class LeftDomain(ConeflowError):
    """An iterate or trajectory state violated the state cone beyond clipping tolerance."""


class StepSizeUnderflow(ConeflowError):
    """Adaptive integrator could not meet the error tolerance at the minimum step."""


class Diverged(ConeflowError):
    """Trajectory norm exceeded the blow-up cap; unbounded orbit suspected."""


class AlphaCapExceeded(ConeflowError):
    """Diagonal shift search exceeded its cap without mapping rays inward."""


class TrapFailed(ConeflowError):
    """Sandwich construction could not strictly separate the level value."""


class NonMonotoneH(ConeflowError):
    """Conserved quantity failed to be monotone along a projection ray."""


class NoConvergence(ConeflowError):
    """Iterative solver exhausted its budget; carries iterations and residual."""

    def __init__(self, iterations: int, residual: float, detail: str = ""):
        msg = f"no convergence after {iterations} iterations (residual {residual:.3e})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.iterations = iterations
        self.residual = residual


class NoIntersection(ConeflowError):
    """Central-projection ray misses the target plane (parallel or pointing away)."""


class CurveTooShort(ConeflowError):
    """Query point dominates the whole computed equilibrium curve."""
