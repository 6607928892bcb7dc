"""Closed-loop double-integrator simulation.

The state ``(x, v)`` obeys ``x' = v, v' = u(x, v)``.  Integration is classical
fixed-step RK4 with the step divided by ``substep_factor`` whenever the safety
margin drops below ``substep_margin``.  Under the beta-scheduled laws the step is
also capped at ``1 / (k_d beta(d_x))`` so that the growing damping stays inside
RK4's stability interval.  A step whose RK4 stage leaves the free space is
halved and retried; only when the safe step falls below ``MIN_STEP`` is the run
declared a collision, and the crossing is then localised by bisection.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, NamedTuple, Optional

import numpy as np

from .controllers import ControlEval, ControllerKind, beta
from .errors import (
    BadInitialState,
    DampNavError,
    InsideObstacle,
    OutsideDomain,
    TooShort,
    Unsafe,
    ValidationError,
)
from .geometry import safety_margin

COLLISION_TIME_TOL = 1e-6
MIN_STEP = 1e-10
# bound on k_d * beta * h; RK4 is stable on the negative real axis up to about 2.78
STIFF_LIMIT = 1.0
# stage time offsets of classical RK4, as fractions of the step
_STAGE_C = (0.0, 0.5, 0.5, 1.0)


@dataclass(frozen=True)
class State:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        v = np.array(self.v, dtype=float).reshape(-1)
        if x.shape != v.shape:
            raise ValidationError("x and v must have the same dimension", "start")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValidationError("state must be finite", "start")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    t_max: float = 200.0
    method: str = "RK4"
    stop_pos_tol: float = 1e-2
    stop_vel_tol: float = 1e-2
    substep_margin: Optional[float] = None  # None: use the damping schedule's eps1
    substep_factor: int = 10

    def __post_init__(self):
        if self.method != "RK4":
            raise ValidationError("only RK4 is supported", "integrator.method")
        if not (self.dt > 0 and self.t_max > 0 and self.dt <= self.t_max):
            raise ValidationError("need 0 < dt <= t_max", "integrator.dt")
        if not (self.stop_pos_tol > 0 and self.stop_vel_tol > 0):
            raise ValidationError("stop tolerances must be positive", "integrator.stop_pos_tol")
        if self.substep_margin is not None and self.substep_margin < 0:
            raise ValidationError("substep_margin must be non-negative", "integrator.substep_margin")
        if int(self.substep_factor) != self.substep_factor or self.substep_factor < 2:
            raise ValidationError("substep_factor must be an integer >= 2", "integrator.substep_factor")


class Outcome(str, Enum):
    CONVERGED = "Converged"
    COLLIDED = "Collided"
    TIMED_OUT = "TimedOut"


@dataclass
class Trajectory:
    """Column arrays of samples plus the run outcome."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    d_x: np.ndarray
    z_norm: np.ndarray
    u: np.ndarray
    u_norm: np.ndarray
    outcome: Outcome
    collision_time: Optional[float] = None

    def __len__(self) -> int:
        return self.t.size

    @property
    def dim(self) -> int:
        return self.x.shape[1]


class Metrics(NamedTuple):
    path_length: float
    min_d_x: float
    final_pos_err: float
    final_vel_norm: float
    settling_time: Optional[float]
    max_u_norm: float


class _StageFailure(Exception):
    def __init__(self, stage: int, x: np.ndarray, v: np.ndarray):
        super().__init__(stage)
        self.stage = stage
        self.x = x
        self.v = v


class _FieldController:
    """Adapter for a bare ``u = f(x, v)`` callable; ``d_x`` is reported as +inf."""

    def __init__(self, fun):
        self.fun = fun

    def evaluate(self, x, v) -> ControlEval:
        return ControlEval(np.asarray(self.fun(x, v), dtype=float), math.inf, np.zeros_like(x))


def _as_controller(controller):
    return controller if hasattr(controller, "evaluate") else _FieldController(controller)


def _stage(controller, x, v, k: int) -> ControlEval:
    try:
        ev = controller.evaluate(x, v)
    except (Unsafe, OutsideDomain, InsideObstacle):
        raise _StageFailure(k, x, v) from None
    if not ev.d_x > 0.0:
        raise _StageFailure(k, x, v)
    return ev


def _rk4(controller, x, v, ev0: ControlEval, h: float):
    a1 = ev0.u
    x2 = x + 0.5 * h * v
    v2 = v + 0.5 * h * a1
    a2 = _stage(controller, x2, v2, 1).u
    x3 = x + 0.5 * h * v2
    v3 = v + 0.5 * h * a2
    a3 = _stage(controller, x3, v3, 2).u
    x4 = x + h * v3
    v4 = v + h * a3
    a4 = _stage(controller, x4, v4, 3).u
    x_new = x + (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4)
    v_new = v + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return x_new, v_new, _stage(controller, x_new, v_new, 4)


def step(state: State, controller, dt: float) -> State:
    """One RK4 step of the closed loop.

    ``controller`` is an object with ``evaluate(x, v) -> ControlEval`` or a plain
    callable ``u(x, v)``.  Raises :class:`Unsafe` if any stage has ``d_x <= 0``.
    """
    ctrl = _as_controller(controller)
    try:
        ev0 = _stage(ctrl, state.x, state.v, 0)
        x, v, _ = _rk4(ctrl, state.x, state.v, ev0, dt)
    except _StageFailure as fail:
        raise Unsafe(f"stage {fail.stage} left the free space") from None
    return State(x, v)


class _Recorder:
    def __init__(self):
        self.rows: list[tuple] = []

    def add(self, t, x, v, d_x, v_d, u):
        self.rows.append((t, x, v, d_x, v_d, u))

    def build(self, outcome: Outcome, collision_time=None) -> Trajectory:
        t = np.array([r[0] for r in self.rows])
        x = np.array([r[1] for r in self.rows])
        v = np.array([r[2] for r in self.rows])
        d_x = np.array([r[3] for r in self.rows])
        v_d = np.array([r[4] for r in self.rows])
        u = np.array([r[5] for r in self.rows])
        return Trajectory(
            t=t,
            x=x,
            v=v,
            d_x=d_x,
            z_norm=np.linalg.norm(v - v_d, axis=1),
            u=u,
            u_norm=np.linalg.norm(u, axis=1),
            outcome=outcome,
            collision_time=collision_time,
        )


def _collision_sample(controller, world, x, v, ev0, h_fail: float):
    """Shrink a failing step to within ``COLLISION_TIME_TOL`` and return the failing stage."""
    lo, hi = 0.0, h_fail
    fail = None
    while hi - lo > COLLISION_TIME_TOL:
        mid = 0.5 * (lo + hi)
        try:
            _rk4(controller, x, v, ev0, mid)
            lo = mid
        except _StageFailure as exc:
            hi, fail = mid, exc
    if fail is None:
        try:
            _rk4(controller, x, v, ev0, hi)
        except _StageFailure as exc:
            fail = exc
    if fail is None:  # pragma: no cover - the full step failed, so hi must too
        raise RuntimeError("collision bisection lost the failing step")
    stage_t = _STAGE_C[fail.stage] * hi if fail.stage < 4 else hi
    try:
        d_x = safety_margin(fail.x, world).d_x
    except InsideObstacle:
        d_x = -world.robot_radius
    d_x = min(d_x, 0.0)
    try:
        ev = controller.evaluate(fail.x, fail.v)
        u, v_d = ev.u, ev.v_d
    except DampNavError:
        u = np.full(x.size, np.nan)
        v_d = np.full(x.size, np.nan)
    return stage_t, fail.x, fail.v, d_x, v_d, u


def simulate(initial: State, controller, cfg: IntegratorConfig, world=None, target=None) -> Trajectory:
    """Integrate from ``initial`` until convergence, collision or ``t_max``.

    ``world`` and ``target`` default to the controller's world and planner target.
    """
    world = controller.world if world is None else world
    x_d = np.asarray(controller.planner.target if target is None else target, dtype=float)
    margin = cfg.substep_margin
    if margin is None:
        margin = controller.cfg.schedule.eps1
    x, v = initial.x.copy(), initial.v.copy()
    try:
        d0 = safety_margin(x, world).d_x
    except InsideObstacle as exc:
        raise BadInitialState(f"initial position inside an obstacle: {exc}") from None
    if not d0 > 0.0:
        raise BadInitialState(f"initial safety margin {d0:.6g} is not positive")
    cc = getattr(controller, "cfg", None)
    stiff = cc is not None and cc.kind != ControllerKind.FIXED
    ev = controller.evaluate(x, v)
    rec = _Recorder()
    t = 0.0
    rec.add(t, x, v, ev.d_x, ev.v_d, ev.u)
    pos_tol, vel_tol = cfg.stop_pos_tol, cfg.stop_vel_tol
    while True:
        if np.linalg.norm(x - x_d) < pos_tol and np.linalg.norm(v) < vel_tol:
            return rec.build(Outcome.CONVERGED)
        if t >= cfg.t_max:
            return rec.build(Outcome.TIMED_OUT)
        h = cfg.dt if ev.d_x >= margin else cfg.dt / cfg.substep_factor
        if stiff:
            h = min(h, STIFF_LIMIT / (cc.k_d * beta(ev.d_x, cc.schedule)))
        h = min(h, cfg.t_max - t)
        while True:
            try:
                x_new, v_new, ev_new = _rk4(controller, x, v, ev, h)
                break
            except _StageFailure:
                if h < 2.0 * MIN_STEP:
                    dt_c, xc, vc, dc, vdc, uc = _collision_sample(controller, world, x, v, ev, h)
                    tc = t + dt_c
                    rec.add(tc, xc, vc, dc, vdc, uc)
                    return rec.build(Outcome.COLLIDED, tc)
                h *= 0.5
        t = t + h
        x, v, ev = x_new, v_new, ev_new
        rec.add(t, x, v, ev.d_x, ev.v_d, ev.u)


def path_length(traj: Trajectory) -> float:
    """Sum of chord lengths between consecutive positions."""
    if len(traj) < 2:
        raise TooShort("path length needs at least two samples")
    return float(np.sum(np.linalg.norm(np.diff(traj.x, axis=0), axis=1)))


def compute_metrics(traj: Trajectory, target, pos_tol: float) -> Metrics:
    target = np.asarray(target, dtype=float)
    err = np.linalg.norm(traj.x - target, axis=1)
    outside = np.nonzero(err >= pos_tol)[0]
    if outside.size == 0:
        settling = float(traj.t[0])
    elif outside[-1] + 1 < len(traj):
        settling = float(traj.t[outside[-1] + 1])
    else:
        settling = None
    un = traj.u_norm[np.isfinite(traj.u_norm)]
    return Metrics(
        path_length=path_length(traj) if len(traj) >= 2 else 0.0,
        min_d_x=float(np.min(traj.d_x)),
        final_pos_err=float(err[-1]),
        final_vel_norm=float(np.linalg.norm(traj.v[-1])),
        settling_time=settling,
        max_u_norm=float(un.max()) if un.size else math.nan,
    )


@dataclass
class RunResult:
    index: int
    trajectory: Optional[Trajectory] = None
    metrics: Optional[Metrics] = None
    error: Optional[str] = field(default=None)


def _run_one(args) -> RunResult:
    scenario, k, start = args
    try:
        controller = scenario.build_controller()
        traj = simulate(start, controller, scenario.integrator)
        metrics = compute_metrics(traj, controller.planner.target, scenario.integrator.stop_pos_tol)
        return RunResult(k, traj, metrics)
    except DampNavError as exc:
        return RunResult(k, error=f"{type(exc).__name__}: {exc}")


def batch_run(scenario: Any, starts=None, workers: int = 1) -> list[RunResult]:
    """Simulate every start of ``scenario``.  Results keep start order.

    Per-run library errors are captured in ``RunResult.error`` and do not stop
    the batch.  ``workers > 1`` fans runs out to processes.
    """
    if starts is None:
        starts = scenario.resolved_starts()
    jobs = [(scenario, k, s) for k, s in enumerate(starts)]
    if not jobs:
        return []
    if workers <= 1 or len(jobs) == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))
