"""Obstacles, workspaces and the safety-margin distance function.

Every obstacle is convex (a ball or an ellipsoid) or is the complement of a
ball (the workspace boundary).  For a robot of radius ``r`` the safety margin
is ``d_x = min_i d(x, O_i) - r`` and, where the closest point is unique, its
gradient is the unit vector ``eta`` pointing from the closest obstacle point
to ``x``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union

import numpy as np
from scipy import optimize

from .errors import InsideObstacle, NonConvergence, SeparationViolation, ValidationError

PROJECTION_TOL = 1e-12
PROJECTION_MAX_ITER = 200
TIE_TOL = 1e-9


def _vec(a, name: str = "vector") -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(-1)
    if arr.size not in (2, 3):
        raise ValidationError(f"{name} must have 2 or 3 entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


def _norm(a: np.ndarray) -> float:
    return math.sqrt(float(a @ a))


class Projection(NamedTuple):
    dist: float
    closest: np.ndarray


@dataclass(frozen=True, eq=False)
class Sphere:
    """Solid ball obstacle."""

    center: np.ndarray
    radius: float
    anchor: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, "center"))
        if not self.radius > 0:
            raise ValidationError("radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))
        anchor = self.center if self.anchor is None else _vec(self.anchor, "anchor")
        object.__setattr__(self, "anchor", anchor)

    @property
    def dim(self) -> int:
        return self.center.size

    def contains_interior(self, x: np.ndarray) -> bool:
        return _norm(x - self.center) < self.radius

    def distance(self, x: np.ndarray) -> Projection:
        diff = x - self.center
        rho = _norm(diff)
        if rho < self.radius:
            raise InsideObstacle("point inside sphere obstacle")
        if rho == 0.0:
            raise InsideObstacle("point at sphere center")
        return Projection(rho - self.radius, self.center + diff * (self.radius / rho))

    def distance_bounds(self, x: np.ndarray) -> tuple[float, float]:
        d = _norm(x - self.center) - self.radius
        return d, d

    def quadric(self) -> tuple[np.ndarray, float]:
        """``(A, s)`` such that the obstacle is ``s*((x-c)^T A (x-c) - 1) <= 0``."""
        return np.eye(self.dim) / self.radius**2, self.radius**2

    def surface_point(self, u: np.ndarray) -> np.ndarray:
        return self.center + self.radius * u

    def extent(self) -> float:
        return self.radius

    def to_dict(self) -> dict:
        out = {"type": "sphere", "center": self.center.tolist(), "radius": self.radius}
        if not np.array_equal(self.anchor, self.center):
            out["anchor"] = self.anchor.tolist()
        return out


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """Solid ellipsoid ``{x : (x-c)^T S (x-c) <= 1}`` with ``S`` symmetric positive definite."""

    center: np.ndarray
    shape: np.ndarray
    anchor: np.ndarray | None = None
    axes: np.ndarray = field(init=False, repr=False)
    rotation: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = _vec(self.center, "center")
        S = np.array(self.shape, dtype=float)
        if S.shape != (c.size, c.size):
            raise ValidationError(f"shape must be {c.size}x{c.size}")
        if np.linalg.norm(S - S.T) >= 1e-12:
            raise ValidationError("shape matrix must be symmetric")
        lam, Q = np.linalg.eigh(S)
        if not np.all(lam > 0):
            raise ValidationError("shape matrix must be positive definite")
        S.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", S)
        object.__setattr__(self, "axes", 1.0 / np.sqrt(lam))
        object.__setattr__(self, "rotation", Q)
        anchor = c if self.anchor is None else _vec(self.anchor, "anchor")
        object.__setattr__(self, "anchor", anchor)

    @classmethod
    def from_axes(cls, center, semi_axes, angle: float = 0.0, anchor=None) -> "Ellipsoid":
        """Planar ellipse with semi-axes ``(a, b)`` rotated by ``angle`` radians."""
        a, b = semi_axes
        c, s = math.cos(angle), math.sin(angle)
        R = np.array([[c, -s], [s, c]])
        S = R @ np.diag([1.0 / a**2, 1.0 / b**2]) @ R.T
        return cls(center, 0.5 * (S + S.T), anchor)

    @property
    def dim(self) -> int:
        return self.center.size

    def contains_interior(self, x: np.ndarray) -> bool:
        d = x - self.center
        return float(d @ self.shape @ d) < 1.0

    def distance(self, x: np.ndarray) -> Projection:
        y = (x - self.center) @ self.rotation
        t, dist = _ellipsoid_secular(y.tolist(), (self.axes**2).tolist())
        p = y * (self.axes**2 / (self.axes**2 + t))
        return Projection(dist, self.center + self.rotation @ p)

    def distance_bounds(self, x: np.ndarray) -> tuple[float, float]:
        rho = _norm(x - self.center)
        return rho - float(self.axes.max()), rho - float(self.axes.min())

    def quadric(self) -> tuple[np.ndarray, float]:
        return np.array(self.shape), 1.0

    def surface_point(self, u: np.ndarray) -> np.ndarray:
        return self.center + self.rotation @ (self.axes * u)

    def extent(self) -> float:
        return float(self.axes.max())

    def to_dict(self) -> dict:
        out = {"type": "ellipsoid", "center": self.center.tolist(), "shape": self.shape.tolist()}
        if not np.array_equal(self.anchor, self.center):
            out["anchor"] = self.anchor.tolist()
        return out


def _ellipsoid_secular(y: list[float], a2: list[float]) -> tuple[float, float]:
    """Solve ``sum_k a2_k y_k^2 / (a2_k + t)^2 = 1`` for the multiplier ``t >= 0``.

    ``y`` are the query coordinates in the principal frame.  Returns ``(t, dist)``.
    Safeguarded Newton: the function is convex and decreasing in ``t`` so Newton
    iterates from the left stay bracketed; bisection takes over otherwise.
    """
    q0 = sum(yk * yk / ak for yk, ak in zip(y, a2))
    if q0 < 1.0:
        raise InsideObstacle("point inside ellipsoid obstacle")
    if q0 == 1.0:
        return 0.0, 0.0
    ynorm = math.sqrt(sum(yk * yk for yk in y))
    amin, amax = math.sqrt(min(a2)), math.sqrt(max(a2))
    lo = max(0.0, amin * ynorm - amax * amax)
    hi = max(lo, amax * ynorm - amin * amin)
    t = lo
    for _ in range(PROJECTION_MAX_ITER):
        F = -1.0
        dF = 0.0
        for yk, ak in zip(y, a2):
            w = ak + t
            s = ak * yk * yk / (w * w)
            F += s
            dF -= 2.0 * s / w
        if F > 0.0:
            lo = t
        else:
            hi = t
        if F == 0.0 or dF == 0.0:
            break
        t_new = t - F / dF
        if not lo <= t_new <= hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= PROJECTION_TOL * (1.0 + t):
            t = t_new
            break
        t = t_new
    else:
        raise NonConvergence("ellipsoid projection did not converge")
    dist = math.sqrt(sum((yk * t / (ak + t)) ** 2 for yk, ak in zip(y, a2)))
    return t, dist


@dataclass(frozen=True, eq=False)
class BoundarySphere:
    """Workspace boundary: the obstacle is everything outside the open ball."""

    center: np.ndarray
    radius: float
    anchor: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, "center"))
        if not self.radius > 0:
            raise ValidationError("radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))
        anchor = self.center if self.anchor is None else _vec(self.anchor, "anchor")
        object.__setattr__(self, "anchor", anchor)

    @property
    def dim(self) -> int:
        return self.center.size

    def contains_interior(self, x: np.ndarray) -> bool:
        return _norm(x - self.center) > self.radius

    def distance(self, x: np.ndarray) -> Projection:
        diff = x - self.center
        rho = _norm(diff)
        if rho > self.radius:
            raise InsideObstacle("point outside the workspace boundary")
        if rho == 0.0:
            # every boundary point is closest; pick a fixed one
            u = np.zeros(self.dim)
            u[0] = 1.0
        else:
            u = diff / rho
        return Projection(self.radius - rho, self.center + self.radius * u)

    def distance_bounds(self, x: np.ndarray) -> tuple[float, float]:
        d = self.radius - _norm(x - self.center)
        return d, d

    def quadric(self) -> tuple[np.ndarray, float]:
        return np.eye(self.dim) / self.radius**2, -self.radius**2

    def to_dict(self) -> dict:
        out = {"type": "boundary", "center": self.center.tolist(), "radius": self.radius}
        if not np.array_equal(self.anchor, self.center):
            out["anchor"] = self.anchor.tolist()
        return out


Obstacle = Union[Sphere, Ellipsoid, BoundarySphere]


def obstacle_from_dict(d: dict) -> Obstacle:
    kind = d["type"]
    anchor = d.get("anchor")
    if kind == "sphere":
        return Sphere(d["center"], d["radius"], anchor)
    if kind == "ellipsoid":
        return Ellipsoid(d["center"], d["shape"], anchor)
    if kind == "boundary":
        return BoundarySphere(d["center"], d["radius"], anchor)
    raise ValidationError(f"unknown obstacle type {kind!r}", "type")


class Margin(NamedTuple):
    d_x: float
    active_index: int
    eta: np.ndarray
    closest: np.ndarray


@dataclass(frozen=True, eq=False)
class WorldModel:
    """Obstacle list plus robot radius.  Immutable once built."""

    obstacles: tuple
    robot_radius: float
    delta_u: float = 0.5

    def __post_init__(self):
        obs = tuple(self.obstacles)
        object.__setattr__(self, "obstacles", obs)
        if not obs:
            raise ValidationError("world needs at least one obstacle", "obstacles")
        if not self.robot_radius > 0:
            raise ValidationError("robot radius must be positive", "robot_radius")
        if not self.delta_u > 0:
            raise ValidationError("delta_u must be positive", "delta_u")
        dims = {ob.dim for ob in obs}
        if len(dims) != 1:
            raise ValidationError("obstacles mix 2-D and 3-D geometry", "obstacles")
        for i, ob in enumerate(obs):
            if isinstance(ob, BoundarySphere) and i != 0:
                raise ValidationError("a boundary sphere may only appear at index 0", f"obstacles.{i}")

    @property
    def dim(self) -> int:
        return self.obstacles[0].dim

    @property
    def bounded(self) -> bool:
        return isinstance(self.obstacles[0], BoundarySphere)

    def check_separation(self) -> None:
        """Raise :class:`SeparationViolation` unless every pair is more than ``2r`` apart."""
        for i, j in itertools.combinations(range(len(self.obstacles)), 2):
            sep = obstacle_separation(self.obstacles[i], self.obstacles[j])
            if not sep > 2.0 * self.robot_radius:
                raise SeparationViolation(
                    f"obstacles {i} and {j} are {sep:.6g} apart, need more than 2r = "
                    f"{2.0 * self.robot_radius:.6g}",
                    "world.obstacles",
                )

    def bounding_box(self, pad: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        if self.bounded:
            ob = self.obstacles[0]
            return ob.center - ob.radius, ob.center + ob.radius
        lo = np.min([ob.center - ob.extent() for ob in self.obstacles], axis=0)
        hi = np.max([ob.center + ob.extent() for ob in self.obstacles], axis=0)
        return lo - pad, hi + pad

    def to_dict(self) -> dict:
        return {
            "robot_radius": self.robot_radius,
            "delta_u": self.delta_u,
            "obstacles": [ob.to_dict() for ob in self.obstacles],
        }


def distance_to_obstacle(x, ob: Obstacle) -> Projection:
    """Euclidean distance from ``x`` to obstacle ``ob`` and the closest obstacle point."""
    return ob.distance(np.asarray(x, dtype=float))


def safety_margin(x, world: WorldModel) -> Margin:
    """``d_x = min_i d(x, O_i) - r`` with the active obstacle and unit normal ``eta``.

    Obstacles whose cheap lower bound exceeds the best upper bound are skipped.
    Ties within ``TIE_TOL`` go to the smallest index.
    """
    x = np.asarray(x, dtype=float)
    obs = world.obstacles
    bounds = [ob.distance_bounds(x) for ob in obs]
    best_hi = min(b[1] for b in bounds)
    best = None
    best_i = -1
    for i, ob in enumerate(obs):
        if bounds[i][0] > best_hi + TIE_TOL:
            continue
        proj = ob.distance(x)
        if best is None or proj.dist < best.dist - TIE_TOL:
            best, best_i = proj, i
    diff = x - best.closest
    dn = _norm(diff)
    eta = diff / dn if dn > 0.0 else np.full(x.size, np.nan)
    return Margin(best.dist - world.robot_radius, best_i, eta, best.closest)


def margin_value(x, world: WorldModel) -> float:
    return safety_margin(x, world).d_x


def all_distances(x, world: WorldModel) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.array([ob.distance(x).dist for ob in world.obstacles])


def fd_hessian_of_distance(x, world: WorldModel, h: float | None = None) -> np.ndarray:
    """Central finite-difference Hessian of ``d_x``, symmetrised.

    Default step ``1e-4 * (1 + |x|)``.  Raises :class:`InsideObstacle` if a stencil
    point falls inside an obstacle body.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if h is None:
        h = 1e-4 * (1.0 + _norm(x))
    f = lambda p: safety_margin(p, world).d_x  # noqa: E731
    f0 = f(x)
    E = np.eye(n) * h
    H = np.empty((n, n))
    for i in range(n):
        H[i, i] = (f(x + E[i]) - 2.0 * f0 + f(x - E[i])) / h**2
        for j in range(i + 1, n):
            H[i, j] = (
                f(x + E[i] + E[j]) - f(x + E[i] - E[j]) - f(x - E[i] + E[j]) + f(x - E[i] - E[j])
            ) / (4.0 * h**2)
            H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


def _unit(angles: Sequence[float], n: int) -> np.ndarray:
    if n == 2:
        return np.array([math.cos(angles[0]), math.sin(angles[0])])
    th, ph = angles
    return np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])


def _angle_grid(n: int) -> list[tuple[float, ...]]:
    if n == 2:
        return [(a,) for a in np.linspace(0.0, 2 * math.pi, 1440, endpoint=False)]
    return [(th, ph) for th in np.linspace(0.0, math.pi, 61) for ph in np.linspace(0.0, 2 * math.pi, 120, endpoint=False)]


def _signed_gap(p: np.ndarray, ob: Obstacle) -> float:
    if ob.contains_interior(p):
        return 0.0
    return ob.distance(p).dist


def obstacle_separation(a: Obstacle, b: Obstacle) -> float:
    """``min ||p - q||`` over ``p in a, q in b``; 0 when they overlap."""
    if isinstance(a, BoundarySphere) or isinstance(b, BoundarySphere):
        bd, ob = (a, b) if isinstance(a, BoundarySphere) else (b, a)
        if isinstance(ob, BoundarySphere):
            raise ValidationError("only one boundary sphere is allowed")
        if isinstance(ob, Sphere):
            return max(bd.radius - _norm(ob.center - bd.center) - ob.radius, 0.0)
        far = lambda ang: -_norm(ob.surface_point(_unit(ang, ob.dim)) - bd.center)  # noqa: E731
        return max(bd.radius + _refine_min(far, ob.dim), 0.0)
    if isinstance(a, Sphere) and isinstance(b, Sphere):
        return max(_norm(a.center - b.center) - a.radius - b.radius, 0.0)
    if isinstance(a, Sphere):
        a, b = b, a
    # a is an ellipsoid here; a fully containing b would never show on a's surface
    if a.contains_interior(b.center) or b.contains_interior(a.center):
        return 0.0
    gap = lambda ang: _signed_gap(a.surface_point(_unit(ang, a.dim)), b)  # noqa: E731
    return max(_refine_min(gap, a.dim), 0.0)


def _refine_min(fun, n: int) -> float:
    grid = _angle_grid(n)
    vals = [fun(ang) for ang in grid]
    k = int(np.argmin(vals))
    if vals[k] <= 0.0:
        return vals[k]
    res = optimize.minimize(lambda z: fun(tuple(z)), np.array(grid[k]), method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12})
    return min(float(res.fun), vals[k])
