"""Exception hierarchy shared by every dampnav module."""

from __future__ import annotations


class DampNavError(Exception):
    """Base class for all library errors."""


class InsideObstacle(DampNavError):
    """A query point lies in the interior of an obstacle body."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class NonConvergence(DampNavError):
    """An iterative solver did not reach its tolerance."""


NoConvergence = NonConvergence


class OutsideDomain(DampNavError):
    """The navigation function is undefined at the query point (h(x) < 0)."""


class OutOfRange(DampNavError):
    """A scalar argument lies outside the interval a function is defined on."""


class Unsafe(DampNavError):
    """The safety margin is non-positive, so the damping schedule is undefined."""

    def __init__(self, message: str, d_x: float | None = None):
        super().__init__(message)
        self.d_x = d_x


class NoPotential(DampNavError):
    """A controller needs a scalar potential but the planner does not expose one."""


class DegenerateEquilibrium(DampNavError):
    """An equilibrium has a Jacobian eigenvalue with (numerically) zero real part."""


class BadInitialState(DampNavError):
    """A simulation was started outside the open free space."""


class TooShort(DampNavError):
    """A trajectory has too few samples for the requested metric."""


class EmptyShell(DampNavError):
    """Rejection sampling found no point in the requested boundary shell."""


class ParseError(DampNavError):
    """A scenario file is not well-formed JSON."""


class ValidationError(DampNavError):
    """A scenario or parameter set violates a constraint.

    ``path`` names the offending field, e.g. ``"controller.eps1"``.
    """

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.reason = message


class SeparationViolation(ValidationError):
    """Two obstacles are closer than twice the robot radius."""
