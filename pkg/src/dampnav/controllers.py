"""Damping schedule and second-order control laws.

* DDF (dynamic damping feedback): ``u = -k1 grad(phi) - k_d beta(d_x) v``
* VTF (velocity tracking feedback): ``u = -k_d beta(d_x) (v - v_d) + J v`` with
  ``J = d v_d / d x``, so ``J v`` is the rate of change of ``v_d`` along the motion
* fixed damping: ``u = -k1 grad(phi) - k_d v``, the unsafe baseline
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import DegenerateEquilibrium, NoPotential, Unsafe, ValidationError
from .geometry import WorldModel, safety_margin
from .linalg import char_poly_roots, eigenvalues_dense
from .planners import MotionPlanner

DEGENERATE_TOL = 1e-10
# imaginary parts below this (relative to the matrix norm) are finite-difference noise
IMAG_NOISE = 1e-8


@dataclass(frozen=True)
class DampingSchedule:
    eps1: float
    eps2: float

    def __post_init__(self):
        if not 0.0 < self.eps1 < 1.0:
            raise ValidationError("eps1 must lie in (0,1)", "controller.eps1")
        if not self.eps2 > self.eps1:
            raise ValidationError("eps2 must exceed eps1", "controller.eps2")


def beta(p: float, schedule: DampingSchedule) -> float:
    """Damping multiplier: 1 beyond ``eps2``, ``1/p`` below ``eps1``, a line segment between."""
    e1, e2 = schedule.eps1, schedule.eps2
    if not p > 0.0:
        raise Unsafe(f"safety margin {p} is not positive", p)
    if p >= e2:
        return 1.0
    if p <= e1:
        return 1.0 / p
    return (e2 - e1 * e1 + (e1 - 1.0) * p) / (e1 * (e2 - e1))


class ControllerKind(str, Enum):
    DDF = "DDF"
    VTF = "VTF"
    FIXED = "FixedDamping"


@dataclass(frozen=True)
class ControllerConfig:
    kind: ControllerKind
    k1: float
    k_d: float
    schedule: DampingSchedule

    def __post_init__(self):
        object.__setattr__(self, "kind", ControllerKind(self.kind))
        for name in ("k1", "k_d"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValidationError(f"{name} must be positive", f"controller.{name}")


class ControlEval(NamedTuple):
    u: np.ndarray
    d_x: float
    v_d: np.ndarray


class Controller:
    """Maps ``(x, v)`` to the acceleration ``u`` for a fixed planner and world."""

    def __init__(self, cfg: ControllerConfig, planner: MotionPlanner, world: WorldModel):
        self.cfg = cfg
        self.planner = planner
        self.world = world

    def evaluate(self, x: np.ndarray, v: np.ndarray) -> ControlEval:
        raise NotImplementedError

    def __call__(self, x, v) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=float), np.asarray(v, dtype=float)).u


class DDFController(Controller):
    def __init__(self, cfg, planner, world):
        if not planner.has_potential:
            raise NoPotential("DDF needs a planner with a scalar potential")
        super().__init__(cfg, planner, world)

    def evaluate(self, x, v) -> ControlEval:
        d_x = safety_margin(x, self.world).d_x
        b = beta(d_x, self.cfg.schedule)
        grad = self.planner.potential(x)[1]
        u = -self.cfg.k1 * grad - (self.cfg.k_d * b) * v
        return ControlEval(u, d_x, -self.planner.k1 * grad)


class VTFController(Controller):
    def evaluate(self, x, v) -> ControlEval:
        d_x = safety_margin(x, self.world).d_x
        b = beta(d_x, self.cfg.schedule)
        v_d, J = self.planner.velocity_and_jacobian(x)
        u = -(self.cfg.k_d * b) * (v - v_d) + J @ v
        return ControlEval(u, d_x, v_d)


class FixedDampingController(Controller):
    """No safety logic: ``d_x`` is reported but never checked."""

    def __init__(self, cfg, planner, world):
        if not planner.has_potential:
            raise NoPotential("fixed damping needs a planner with a scalar potential")
        super().__init__(cfg, planner, world)

    def evaluate(self, x, v) -> ControlEval:
        d_x = safety_margin(x, self.world).d_x
        grad = self.planner.potential(x)[1]
        u = -self.cfg.k1 * grad - self.cfg.k_d * v
        return ControlEval(u, d_x, -self.planner.k1 * grad)


_CLASSES = {
    ControllerKind.DDF: DDFController,
    ControllerKind.VTF: VTFController,
    ControllerKind.FIXED: FixedDampingController,
}


def make_controller(cfg: ControllerConfig, planner: MotionPlanner, world: WorldModel) -> Controller:
    return _CLASSES[cfg.kind](cfg, planner, world)


def ddf_control(x, v, planner, cfg: ControllerConfig, world: WorldModel) -> np.ndarray:
    return DDFController(cfg, planner, world)(x, v)


def vtf_control(x, v, planner, cfg: ControllerConfig, world: WorldModel) -> np.ndarray:
    return VTFController(cfg, planner, world)(x, v)


def fixed_damping_control(x, v, planner, cfg: ControllerConfig, world: WorldModel | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if not planner.has_potential:
        raise NoPotential("fixed damping needs a planner with a scalar potential")
    grad = planner.potential(x)[1]
    return -cfg.k1 * grad - cfg.k_d * v


class KdBound(NamedTuple):
    g_max: float
    r_max: float
    bound: float


def kd_lower_bound(jac_at_target) -> KdBound:
    """``|g_max| / sqrt(|r_max|)`` from the eigenvalues of the planner Jacobian at the target.

    Imaginary parts smaller than ``1e-8 * max(1, |J|)`` are treated as zero; a
    finite-difference Jacobian of a symmetric Hessian carries asymmetry of that order.
    """
    J = np.asarray(jac_at_target, dtype=float)
    eig = char_poly_roots(J) if J.shape[0] <= 3 else eigenvalues_dense(J)
    if np.any(np.abs(eig.real) < DEGENERATE_TOL):
        raise DegenerateEquilibrium("planner Jacobian has an eigenvalue with zero real part")
    noise = IMAG_NOISE * max(1.0, float(np.linalg.norm(J)))
    imag = np.where(np.abs(eig.imag) <= noise, 0.0, eig.imag)
    g_max = float(imag.max())
    r_max = float(eig.real.max())
    bound = 0.0 if g_max == 0.0 else abs(g_max) / math.sqrt(abs(r_max))
    return KdBound(g_max, r_max, bound)
