"""Scenario files (JSON) and trajectory files (CSV).

A scenario bundles a world, a planner, a controller, an integrator and a list
of start states.  Loading validates structure with a JSON schema and then
checks the numeric constraints, reporting the offending field path.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np

from .controllers import ControllerConfig, ControllerKind, DampingSchedule, kd_lower_bound, make_controller
from .errors import DampNavError, ParseError, ValidationError
from .geometry import Ellipsoid, WorldModel, obstacle_from_dict, safety_margin
from .planners import (
    ModifiedPlanner,
    ModifiedPlannerParams,
    MotionPlanner,
    NavigationFunctionPlanner,
    NfPlannerParams,
)
from .simulation import IntegratorConfig, Outcome, State, Trajectory

log = logging.getLogger(__name__)

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 3}
_MAT = {"type": "array", "items": _VEC, "minItems": 2, "maxItems": 3}

_OBSTACLE = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"enum": ["sphere", "boundary"]},
                "center": _VEC,
                "radius": _NUM,
                "anchor": _VEC,
            },
            "required": ["type", "center", "radius"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "ellipsoid"},
                "center": _VEC,
                "shape": _MAT,
                "anchor": _VEC,
            },
            "required": ["type", "center", "shape"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "ellipse"},
                "center": _VEC,
                "semi_axes": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "angle_deg": _NUM,
                "anchor": _VEC,
            },
            "required": ["type", "center", "semi_axes"],
            "additionalProperties": False,
        },
    ]
}

SCENARIO_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "provenance": {"type": "string"},
        "world": {
            "type": "object",
            "properties": {
                "robot_radius": _NUM,
                "delta_u": _NUM,
                "obstacles": {"type": "array", "items": _OBSTACLE},
            },
            "required": ["robot_radius", "obstacles"],
            "additionalProperties": False,
        },
        "planner": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {
                        "type": {"const": "nf"},
                        "kappa": _NUM,
                        "delta1": _NUM,
                        "delta2": _NUM,
                        "target": _VEC,
                    },
                    "required": ["type", "kappa", "delta1", "delta2", "target"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "type": {"const": "modified"},
                        "kappa": _NUM,
                        "delta1": _NUM,
                        "eps1": _NUM,
                        "eps2": _NUM,
                        "target": _VEC,
                    },
                    "required": ["type", "kappa", "delta1", "target"],
                    "additionalProperties": False,
                },
            ]
        },
        "controller": {
            "type": "object",
            "properties": {
                "kind": {"enum": [k.value for k in ControllerKind]},
                "k1": _NUM,
                "k_d": _NUM,
                "eps1": _NUM,
                "eps2": _NUM,
            },
            "required": ["kind", "k1", "k_d", "eps1", "eps2"],
            "additionalProperties": False,
        },
        "integrator": {
            "type": "object",
            "properties": {
                "dt": _NUM,
                "t_max": _NUM,
                "method": {"const": "RK4"},
                "stop_pos_tol": _NUM,
                "stop_vel_tol": _NUM,
                "substep_margin": {"type": ["number", "null"]},
                "substep_factor": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "rng": {
            "type": "object",
            "properties": {"generator": {"const": "PCG64"}, "seed": {"type": "integer"}},
            "required": ["seed"],
            "additionalProperties": False,
        },
        "starts": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "x": _VEC,
                    "v": {"oneOf": [_VEC, {"type": "string", "pattern": r"^randn(\(\d+\))?$"}]},
                },
                "required": ["x"],
                "additionalProperties": False,
            },
        },
        "outputs": {"type": "string"},
    },
    "required": ["name", "world", "planner", "controller", "starts"],
    "additionalProperties": False,
}

_RANDN = re.compile(r"^randn(?:\((\d+)\))?$")


@dataclass
class Scenario:
    name: str
    world: WorldModel
    planner: dict
    controller: ControllerConfig
    integrator: IntegratorConfig
    starts: list
    rng_seed: int = 0
    provenance: str = ""
    outputs: str = "out"
    warnings: list = field(default_factory=list, compare=False)

    def build_planner(self) -> MotionPlanner:
        p = self.planner
        if p["type"] == "nf":
            params = NfPlannerParams(self.controller.k1, p["kappa"], p["delta1"], p["delta2"], tuple(p["target"]))
            return NavigationFunctionPlanner(params, self.world)
        params = ModifiedPlannerParams(
            self.controller.k1, p["kappa"], p["delta1"], p["eps1"], p["eps2"], tuple(p["target"])
        )
        return ModifiedPlanner(params, self.world)

    def build_controller(self):
        return make_controller(self.controller, self.build_planner(), self.world)

    def resolved_starts(self) -> list[State]:
        """Start states with any random velocities drawn (deterministic in the seed)."""
        shared = np.random.Generator(np.random.PCG64(self.rng_seed))
        out = []
        n = self.world.dim
        for s in self.starts:
            v = s["v"]
            if isinstance(v, str):
                own = _RANDN.match(v).group(1)
                gen = shared if own is None else np.random.Generator(np.random.PCG64(int(own)))
                v = gen.standard_normal(n)
            out.append(State(s["x"], v))
        return out

    def to_dict(self) -> dict:
        c = self.controller
        i = self.integrator
        return {
            "name": self.name,
            "provenance": self.provenance,
            "world": self.world.to_dict(),
            "planner": dict(self.planner),
            "controller": {
                "kind": c.kind.value,
                "k1": c.k1,
                "k_d": c.k_d,
                "eps1": c.schedule.eps1,
                "eps2": c.schedule.eps2,
            },
            "integrator": {
                "dt": i.dt,
                "t_max": i.t_max,
                "method": i.method,
                "stop_pos_tol": i.stop_pos_tol,
                "stop_vel_tol": i.stop_vel_tol,
                "substep_margin": i.substep_margin,
                "substep_factor": i.substep_factor,
            },
            "rng": {"generator": "PCG64", "seed": self.rng_seed},
            "starts": [dict(s) for s in self.starts],
            "outputs": self.outputs,
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _schema_error(err: jsonschema.ValidationError) -> ValidationError:
    path = ".".join(str(p) for p in err.absolute_path)
    best = jsonschema.exceptions.best_match([err])
    return ValidationError(best.message, path)


def _check(cond: bool, message: str, path: str) -> None:
    if not cond:
        raise ValidationError(message, path)


def _positive(d: dict, key: str, path: str) -> None:
    val = d[key]
    _check(math.isfinite(val) and val > 0, f"{key} must be positive", f"{path}.{key}")


def _obstacle(d: dict, path: str):
    d = dict(d)
    if d["type"] == "ellipse":
        _check(len(d["center"]) == 2, "ellipse needs a 2-D center", f"{path}.center")
        a, b = d["semi_axes"]
        _check(a > 0 and b > 0, "semi-axes must be positive", f"{path}.semi_axes")
        return Ellipsoid.from_axes(d["center"], (a, b), math.radians(d.get("angle_deg", 0.0)), d.get("anchor"))
    return obstacle_from_dict(d)


def scenario_from_dict(data: Any) -> Scenario:
    """Validate a decoded scenario document and build a :class:`Scenario`."""
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        raise _schema_error(jsonschema.exceptions.best_match(errors))

    w = data["world"]
    _positive(w, "robot_radius", "world")
    if "delta_u" in w:
        _positive(w, "delta_u", "world")
    obstacles = []
    for k, od in enumerate(w["obstacles"]):
        path = f"world.obstacles.{k}"
        try:
            obstacles.append(_obstacle(od, path))
        except ValidationError as exc:
            raise ValidationError(exc.reason, exc.path if exc.path.startswith("world") else path) from None
    try:
        world = WorldModel(obstacles, w["robot_radius"], w.get("delta_u", 0.5))
    except ValidationError as exc:
        raise ValidationError(exc.reason, f"world.{exc.path}" if exc.path else "world") from None
    world.check_separation()

    c = data["controller"]
    for key in ("k1", "k_d"):
        _positive(c, key, "controller")
    _check(0.0 < c["eps1"] < 1.0, "eps1 must lie in (0,1)", "controller.eps1")
    _check(c["eps2"] > c["eps1"], "eps2 must exceed eps1", "controller.eps2")
    controller = ControllerConfig(c["kind"], float(c["k1"]), float(c["k_d"]), DampingSchedule(c["eps1"], c["eps2"]))

    p = dict(data["planner"])
    for key in ("kappa", "delta1") + (("delta2",) if p["type"] == "nf" else ()):
        _positive(p, key, "planner")
    _check(len(p["target"]) == world.dim, f"target must have {world.dim} entries", "planner.target")
    if p["type"] == "modified":
        p.setdefault("eps1", c["eps1"])
        p.setdefault("eps2", c["eps2"])
        _check(0.0 < p["eps1"] < 1.0, "eps1 must lie in (0,1)", "planner.eps1")
        _check(p["eps2"] > p["eps1"], "eps2 must exceed eps1", "planner.eps2")
        if controller.kind != ControllerKind.VTF:
            raise ValidationError("the modified planner has no potential; use the VTF controller", "controller.kind")
    try:
        d_target = safety_margin(p["target"], world).d_x
    except DampNavError:
        d_target = -1.0
    _check(d_target > 0, "target must lie strictly inside the free space", "planner.target")
    p = {k: (list(map(float, v)) if k == "target" else v) for k, v in p.items()}

    integ = dict(data.get("integrator", {}))
    try:
        integrator = IntegratorConfig(**integ)
    except ValidationError as exc:
        raise ValidationError(exc.reason, exc.path) from None

    starts = []
    for k, s in enumerate(data["starts"]):
        _check(len(s["x"]) == world.dim, f"start position must have {world.dim} entries", f"starts.{k}.x")
        v = s.get("v", [0.0] * world.dim)
        if not isinstance(v, str):
            _check(len(v) == world.dim, f"start velocity must have {world.dim} entries", f"starts.{k}.v")
            v = [float(t) for t in v]
        try:
            d0 = safety_margin(s["x"], world).d_x
        except DampNavError:
            d0 = -1.0
        _check(d0 > 0, "start must lie strictly inside the free space", f"starts.{k}.x")
        starts.append({"x": [float(t) for t in s["x"]], "v": v})

    scenario = Scenario(
        name=data["name"],
        world=world,
        planner=p,
        controller=controller,
        integrator=integrator,
        starts=starts,
        rng_seed=int(data.get("rng", {}).get("seed", 0)),
        provenance=data.get("provenance", ""),
        outputs=data.get("outputs", f"out/{data['name']}"),
    )
    _gain_warning(scenario)
    return scenario


def _gain_warning(scenario: Scenario) -> None:
    try:
        planner = scenario.build_planner()
        kd = kd_lower_bound(planner.jacobian(planner.target))
    except DampNavError as exc:
        scenario.warnings.append(f"k_d bound unavailable: {exc}")
        return
    if kd.bound > 0 and scenario.controller.k_d <= kd.bound:
        msg = f"k_d = {scenario.controller.k_d} does not exceed the stability bound {kd.bound:.6g}"
        scenario.warnings.append(msg)
        log.warning("%s: %s", scenario.name, msg)


def bundled_scenarios() -> list[str]:
    root = resources.files("dampnav") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_scenario_path(name_or_path) -> Path:
    """A filesystem path, or the name of a bundled scenario such as ``sim1_ddf``."""
    path = Path(name_or_path)
    if path.exists():
        return path
    stem = path.name[:-5] if path.name.endswith(".json") else path.name
    bundled = resources.files("dampnav") / "scenarios" / f"{stem}.json"
    if bundled.is_file():
        return Path(str(bundled))
    return path


def load_scenario(path) -> Scenario:
    path = resolve_scenario_path(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return scenario_from_dict(data)


def dump_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), indent=2) + "\n"


# trajectories ------------------------------------------------------------------


def csv_header(n: int) -> list[str]:
    return (
        ["t"]
        + [f"x{i + 1}" for i in range(n)]
        + [f"v{i + 1}" for i in range(n)]
        + ["d_x", "z_norm"]
        + [f"u{i + 1}" for i in range(n)]
        + ["u_norm"]
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def trajectory_csv_text(traj: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header(traj.dim))
    for k in range(len(traj)):
        row = [traj.t[k], *traj.x[k], *traj.v[k], traj.d_x[k], traj.z_norm[k], *traj.u[k], traj.u_norm[k]]
        writer.writerow([_fmt(val) for val in row])
    buf.write(f"# outcome={traj.outcome.value}\n")
    return buf.getvalue()


def write_trajectory_csv(traj: Trajectory, path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(trajectory_csv_text(traj))
    except OSError as exc:
        raise OSError(f"cannot write trajectory to {path}: {exc.strerror or exc}") from exc


def read_trajectory_csv(path) -> Trajectory:
    lines = Path(path).read_text().splitlines()
    outcome = None
    rows = []
    header = None
    for line in lines:
        if line.startswith("# outcome="):
            outcome = Outcome(line.split("=", 1)[1].strip())
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append([float(t) for t in line.split(",")])
    if header is None or outcome is None:
        raise ParseError(f"{path}: not a trajectory CSV")
    n = (len(header) - 4) // 3
    data = np.array(rows).reshape(-1, len(header))
    return Trajectory(
        t=data[:, 0],
        x=data[:, 1:1 + n],
        v=data[:, 1 + n:1 + 2 * n],
        d_x=data[:, 1 + 2 * n],
        z_norm=data[:, 2 + 2 * n],
        u=data[:, 3 + 2 * n:3 + 3 * n],
        u_norm=data[:, 3 + 3 * n],
        outcome=outcome,
        collision_time=float(data[-1, 0]) if outcome == Outcome.COLLIDED else None,
    )


def write_plot_data(traj: Trajectory, out_dir, stem: str) -> list[Path]:
    """Whitespace-separated columns for the xy path, ``d_x(t)`` and ``z_norm(t)``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = traj.dim
    files = {
        f"{stem}_xy.dat": (" ".join(f"x{i + 1}" for i in range(n)), traj.x),
        f"{stem}_dx.dat": ("t d_x", np.column_stack([traj.t, traj.d_x])),
        f"{stem}_z.dat": ("t z_norm", np.column_stack([traj.t, traj.z_norm])),
    }
    written = []
    for name, (head, cols) in files.items():
        path = out_dir / name
        with open(path, "w") as fh:
            fh.write(f"# {head}\n")
            for row in cols:
                fh.write(" ".join(_fmt(v) for v in row) + "\n")
        written.append(path)
    return written
