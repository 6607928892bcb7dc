"""First-order motion planners ``v_d(x)``.

Two planners are provided:

* :class:`NavigationFunctionPlanner`, the gradient flow ``v_d = -k1 grad(phi)`` of a
  Koditschek-Rimon style navigation function
  ``phi = f / (f**kappa + h)**(1/kappa)`` with quadric obstacle functions.
* :class:`ModifiedPlanner`, a sensor-based vector field built only from distances
  to nearby obstacles.  It has no scalar potential.

Jacobians are taken by central finite differences of ``v_d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import InsideObstacle, NoPotential, OutOfRange, OutsideDomain, ValidationError
from .geometry import BoundarySphere, WorldModel, safety_margin

JAC_STEP = 1e-6


def _pos(value: float, name: str) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ValidationError(f"{name} must be positive and finite", name)
    return value


def _target(x_d, world: WorldModel) -> np.ndarray:
    x_d = np.array(x_d, dtype=float).reshape(-1)
    if x_d.size != world.dim:
        raise ValidationError(f"target must have {world.dim} entries", "planner.target")
    try:
        free = safety_margin(x_d, world).d_x > 0
    except InsideObstacle:
        free = False
    if not free:
        raise ValidationError("target must lie strictly inside the free space", "planner.target")
    x_d.setflags(write=False)
    return x_d


class PlannerEval(NamedTuple):
    """Planner output at one point.

    ``jacobian[i, j] = d v_i / d x_j``.
    """

    v_d: np.ndarray
    jacobian: np.ndarray
    potential: Optional[float] = None
    grad_potential: Optional[np.ndarray] = None


def fd_jacobian(fun, x: np.ndarray, h: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of ``fun`` at ``x``; column ``j`` is ``d fun / d x_j``."""
    n = x.size
    if h is None:
        h = JAC_STEP * (1.0 + math.sqrt(float(x @ x)))
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return J


class MotionPlanner:
    """Common interface: ``velocity``, ``jacobian``, ``evaluate`` and optional ``potential``."""

    has_potential = False
    target: np.ndarray
    k1: float

    def velocity(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return fd_jacobian(self.velocity, np.asarray(x, dtype=float))

    def velocity_and_jacobian(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return self.velocity(x), self.jacobian(x)

    def potential(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        raise NoPotential(f"{type(self).__name__} has no scalar potential")

    def evaluate(self, x) -> PlannerEval:
        x = np.asarray(x, dtype=float)
        return PlannerEval(self.velocity(x), self.jacobian(x))


# navigation function planner ---------------------------------------------------


@dataclass(frozen=True)
class NfPlannerParams:
    k1: float
    kappa: float
    delta1: float
    delta2: float
    target: tuple

    def __post_init__(self):
        for name in ("k1", "kappa", "delta1", "delta2"):
            object.__setattr__(self, name, _pos(getattr(self, name), name))
        object.__setattr__(self, "target", tuple(float(t) for t in self.target))


class NavigationFunctionPlanner(MotionPlanner):
    """``v_d = -k1 grad(phi)`` with ``phi = f / (f**kappa + h)**(1/kappa)``.

    Obstacle functions are the quadrics ``delta2 * s_i * ((x-c_i)^T A_i (x-c_i) - 1)``:
    ``|x-c|^2 - rho^2`` for balls, ``(x-c)^T S (x-c) - 1`` for ellipsoids and
    ``rho0^2 - |x-c0|^2`` for the outer boundary.  An unbounded world uses ``h_0 = 1``.
    """

    has_potential = True

    def __init__(self, params: NfPlannerParams, world: WorldModel):
        self.params = params
        self.world = world
        self.k1 = params.k1
        self.kappa = params.kappa
        self.delta1 = params.delta1
        self.delta2 = params.delta2
        self.target = _target(params.target, world)
        self._target_list = self.target.tolist()
        quads = [ob.quadric() for ob in world.obstacles]
        self._centers = np.array([ob.center for ob in world.obstacles])
        self._A = np.array([q[0] for q in quads])
        self._scale = params.delta2 * np.array([q[1] for q in quads])
        self._terms = [(c.tolist(), A.tolist(), sc) for c, A, sc in zip(self._centers, self._A, self._scale)]

    def obstacle_functions(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values ``h_i`` (shape ``(K, m)``) and gradients (``(K, m, n)``) at points ``X``."""
        D = X[:, None, :] - self._centers[None, :, :]
        AD = np.einsum("mij,kmj->kmi", self._A, D)
        q = np.einsum("kmi,kmi->km", D, AD)
        h = self._scale * (q - 1.0)
        grads = (2.0 * self._scale)[None, :, None] * AD
        return h, grads

    def potential_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Potential and gradient at each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        hs, ghs = self.obstacle_functions(X)
        if np.any(hs < 0.0):
            raise OutsideDomain("navigation function undefined: h(x) < 0")
        K, m = hs.shape
        # leave-one-out products via prefix and suffix products
        pre = np.ones((K, m + 1))
        suf = np.ones((K, m + 1))
        pre[:, 1:] = np.cumprod(hs, axis=1)
        suf[:, :-1] = np.cumprod(hs[:, ::-1], axis=1)[:, ::-1]
        H = pre[:, m]
        gH = np.einsum("km,kmi->ki", pre[:, :m] * suf[:, 1:], ghs)
        diff = X - self.target
        f = self.delta1 * np.einsum("ki,ki->k", diff, diff)
        gf = 2.0 * self.delta1 * diff
        k = self.kappa
        at_target = f == 0.0
        fs = np.where(at_target, 1.0, f)
        fk1 = fs ** (k - 1.0)
        s = fk1 * fs + H
        s_inv = s ** (-1.0 / k)
        phi = f * s_inv
        coef = (fs / k) * (s_inv / s)
        grad = s_inv[:, None] * gf - coef[:, None] * ((k * fk1)[:, None] * gf + gH)
        grad[at_target] = 0.0
        return phi, grad

    def potential(self, x) -> tuple[float, np.ndarray]:
        # scalar path of potential_batch; plain floats are much cheaper for n <= 3
        xs = np.asarray(x, dtype=float).tolist()
        n = len(xs)
        hs = []
        ghs = []
        for c, A, sc in self._terms:
            d = [xs[i] - c[i] for i in range(n)]
            Ad = [sum(A[i][j] * d[j] for j in range(n)) for i in range(n)]
            h = sc * (sum(d[i] * Ad[i] for i in range(n)) - 1.0)
            if h < 0.0:
                raise OutsideDomain("navigation function undefined: h(x) < 0")
            hs.append(h)
            ghs.append([2.0 * sc * a for a in Ad])
        m = len(hs)
        suf = [1.0] * (m + 1)
        for i in range(m - 1, -1, -1):
            suf[i] = suf[i + 1] * hs[i]
        gH = [0.0] * n
        pre = 1.0
        for i in range(m):
            w = pre * suf[i + 1]
            for j in range(n):
                gH[j] += w * ghs[i][j]
            pre *= hs[i]
        H = pre
        diff = [xs[i] - self._target_list[i] for i in range(n)]
        f = self.delta1 * sum(d * d for d in diff)
        if f == 0.0:
            return 0.0, np.zeros(n)
        gf = [2.0 * self.delta1 * d for d in diff]
        k = self.kappa
        fk1 = f ** (k - 1.0)
        s = fk1 * f + H
        s_inv = s ** (-1.0 / k)
        coef = (f / k) * (s_inv / s)
        grad = [s_inv * gf[j] - coef * (k * fk1 * gf[j] + gH[j]) for j in range(n)]
        return f * s_inv, np.array(grad)

    def velocity(self, x) -> np.ndarray:
        return -self.k1 * self.potential(x)[1]

    def _grad_and_hessian(self, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        n = x.size
        h = JAC_STEP * (1.0 + math.sqrt(float(x @ x)))
        E = np.eye(n) * h
        phi, G = self.potential_batch(np.vstack([x[None, :], x + E, x - E]))
        hess = (G[1:n + 1] - G[n + 1:]).T / (2.0 * h)
        return float(phi[0]), G[0], hess

    def jacobian(self, x) -> np.ndarray:
        return -self.k1 * self._grad_and_hessian(np.asarray(x, dtype=float))[2]

    def velocity_and_jacobian(self, x) -> tuple[np.ndarray, np.ndarray]:
        _, grad, hess = self._grad_and_hessian(np.asarray(x, dtype=float))
        return -self.k1 * grad, -self.k1 * hess

    def evaluate(self, x) -> PlannerEval:
        phi, grad, hess = self._grad_and_hessian(np.asarray(x, dtype=float))
        return PlannerEval(-self.k1 * grad, -self.k1 * hess, phi, grad)


def nf_potential(x, params: NfPlannerParams, world: WorldModel) -> tuple[float, np.ndarray]:
    """Navigation function value and analytic gradient at ``x``."""
    return NavigationFunctionPlanner(params, world).potential(x)


def nf_planner_eval(x, params: NfPlannerParams, world: WorldModel) -> PlannerEval:
    return NavigationFunctionPlanner(params, world).evaluate(x)


# modified sensor-based planner -------------------------------------------------


def phi1_smoothstep(p: float, eps1: float, eps2: float) -> tuple[float, float]:
    """Cubic Hermite bridge with ``phi1(eps1) = eps1``, ``phi1(eps2) = 1``, unit slope at
    ``eps1`` and zero slope at ``eps2``.  Returns ``(value, derivative)``.
    """
    if not eps1 <= p <= eps2:
        raise OutOfRange(f"p = {p} outside [{eps1}, {eps2}]")
    L = eps2 - eps1
    s = (p - eps1) / L
    s2 = s * s
    s3 = s2 * s
    value = (2 * s3 - 3 * s2 + 1) * eps1 + (s3 - 2 * s2 + s) * L + (3 * s2 - 2 * s3)
    deriv = ((6 * s2 - 6 * s) * eps1 + (3 * s2 - 4 * s + 1) * L + (6 * s - 6 * s2)) / L
    return value, deriv


def _h_of_margin(p: float, eps1: float, eps2: float) -> tuple[float, float]:
    if p <= eps1:
        return p, 1.0
    if p >= eps2:
        return 1.0, 0.0
    return phi1_smoothstep(p, eps1, eps2)


def check_phi1_monotone(eps1: float, eps2: float, samples: int = 1001) -> None:
    """Raise ``ValidationError`` if the Hermite bridge is not monotone on ``[eps1, eps2]``.

    The derivative factors as ``(1 - s)(1 + (6c - 3)s)`` with ``c = (1 - eps1)/(eps2 - eps1)``,
    so monotonicity holds iff ``eps2 - eps1 <= 3(1 - eps1)``.  A sampling pass backs this up.
    """
    if eps2 - eps1 > 3.0 * (1.0 - eps1):
        raise ValidationError(
            "smoothstep bridge is not monotone: need eps2 - eps1 <= 3(1 - eps1)", "planner.eps2"
        )
    ps = np.linspace(eps1, eps2, samples)
    vals = [phi1_smoothstep(float(p), eps1, eps2)[0] for p in ps]
    if np.any(np.diff(vals) < -1e-15):
        raise ValidationError("smoothstep bridge is not monotone", "planner.eps2")


@dataclass(frozen=True)
class ModifiedPlannerParams:
    k1: float
    kappa: float
    delta1: float
    eps1: float
    eps2: float
    target: tuple
    anchors: Optional[tuple] = field(default=None)

    def __post_init__(self):
        for name in ("k1", "kappa", "delta1"):
            object.__setattr__(self, name, _pos(getattr(self, name), name))
        if not 0.0 < self.eps1 < 1.0:
            raise ValidationError("eps1 must lie in (0,1)", "planner.eps1")
        if not self.eps2 > self.eps1:
            raise ValidationError("eps2 must exceed eps1", "planner.eps2")
        check_phi1_monotone(float(self.eps1), float(self.eps2))
        object.__setattr__(self, "target", tuple(float(t) for t in self.target))
        if self.anchors is not None:
            object.__setattr__(self, "anchors", tuple(tuple(float(c) for c in a) for a in self.anchors))


class ModifiedPlanner(MotionPlanner):
    """Sensor-based planner ``v_d = k1 [ f/kappa sum_i g_i (x - x_i) - h grad f ]``.

    ``h_i`` depends only on the margin ``d(x, O_i) - r`` and equals 1 beyond ``eps2``,
    so far obstacles contribute nothing.  The boundary term uses ``x_0 = x_d`` and
    ``g_0 = (h_0 - 1) hbar_0``.
    """

    def __init__(self, params: ModifiedPlannerParams, world: WorldModel):
        self.params = params
        self.world = world
        self.k1 = params.k1
        self.kappa = params.kappa
        self.delta1 = params.delta1
        self.eps1 = params.eps1
        self.eps2 = params.eps2
        self.target = _target(params.target, world)
        anchors = params.anchors
        if anchors is None:
            anchors = [ob.anchor for ob in world.obstacles]
        if len(anchors) != len(world.obstacles):
            raise ValidationError("one anchor per obstacle required", "planner.anchors")
        anchors = [np.array(a, dtype=float) for a in anchors]
        self._sign = []
        for i, ob in enumerate(world.obstacles):
            if isinstance(ob, BoundarySphere):
                anchors[i] = self.target
                self._sign.append(-1.0)
            else:
                if not ob.contains_interior(anchors[i]):
                    raise ValidationError("anchor must lie inside its obstacle", f"world.obstacles.{i}.anchor")
                self._sign.append(1.0)
        self.anchors = np.array(anchors)

    def h_values(self, x: np.ndarray) -> list[float]:
        """Per-obstacle ``h_i(x)``; exact distances skipped when the bound already exceeds ``eps2``."""
        r = self.world.robot_radius
        out = []
        for ob in self.world.obstacles:
            lo = ob.distance_bounds(x)[0] - r
            if lo >= self.eps2:
                out.append(1.0)
            else:
                out.append(_h_of_margin(ob.distance(x).dist - r, self.eps1, self.eps2)[0])
        return out

    def velocity(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        hs = self.h_values(x)
        m = len(hs)
        pre = [1.0] * (m + 1)
        for i, h in enumerate(hs):
            pre[i + 1] = pre[i] * h
        suf = [1.0] * (m + 1)
        for i in range(m - 1, -1, -1):
            suf[i] = suf[i + 1] * hs[i]
        H = pre[m]
        g = np.array([self._sign[i] * (1.0 - hs[i]) * pre[i] * suf[i + 1] for i in range(m)])
        diff = x - self.target
        f = self.delta1 * float(diff @ diff)
        gf = 2.0 * self.delta1 * diff
        rep = g @ (x - self.anchors) if np.any(g) else np.zeros_like(x)
        return self.k1 * ((f / self.kappa) * rep - H * gf)


def hi_smooth(x, ob_index: int, world: WorldModel, eps1: float, eps2: float) -> tuple[float, np.ndarray]:
    """Piecewise obstacle function of the sensor-based planner and its gradient."""
    x = np.asarray(x, dtype=float)
    ob = world.obstacles[ob_index]
    proj = ob.distance(x)
    val, dval = _h_of_margin(proj.dist - world.robot_radius, eps1, eps2)
    if dval == 0.0:
        return val, np.zeros_like(x)
    diff = x - proj.closest
    return val, dval * diff / math.sqrt(float(diff @ diff))


def modified_planner_eval(x, params: ModifiedPlannerParams, world: WorldModel) -> PlannerEval:
    return ModifiedPlanner(params, world).evaluate(x)


class ZeroPlanner(MotionPlanner):
    """``v_d = 0`` with potential 0.  Useful as a null baseline."""

    has_potential = True
    k1 = 1.0

    def __init__(self, dim: int = 2, target=None):
        self.target = np.zeros(dim) if target is None else np.asarray(target, dtype=float)

    def velocity(self, x) -> np.ndarray:
        return np.zeros(np.asarray(x).size)

    def jacobian(self, x) -> np.ndarray:
        n = np.asarray(x).size
        return np.zeros((n, n))

    def potential(self, x) -> tuple[float, np.ndarray]:
        return 0.0, np.zeros(np.asarray(x).size)

    def evaluate(self, x) -> PlannerEval:
        n = np.asarray(x).size
        return PlannerEval(np.zeros(n), np.zeros((n, n)), 0.0, np.zeros(n))
