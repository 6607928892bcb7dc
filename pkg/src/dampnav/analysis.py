"""Equilibria of the planners and the spectra of the lifted closed loops.

At an equilibrium ``(x*, 0)`` the closed-loop Jacobians are

* DDF: ``[[0, I], [-k1 H, -k_d beta I]]`` with ``H`` the Hessian of the potential,
* VTF: ``[[0, I], [k_d beta J, -k_d beta I + J]]`` with ``J = d v_d / d x``.

Every DDF eigenvalue ``lam`` solves ``lam**2 + k_d beta lam - theta = 0`` for an
eigenvalue ``theta`` of ``-k1 H``; the VTF spectrum is ``eig(J)`` together with
``-k_d beta`` repeated ``n`` times.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .controllers import ControllerConfig, ControllerKind, beta
from .errors import (
    DampNavError,
    DegenerateEquilibrium,
    EmptyShell,
    InsideObstacle,
    NoPotential,
    NonConvergence,
    OutsideDomain,
    Unsafe,
)
from .geometry import WorldModel, all_distances, fd_hessian_of_distance, safety_margin
from .linalg import eigenvalues_dense, match_multisets
from .planners import MotionPlanner

ZERO_BAND = 1e-10


class EquilibriumKind(str, Enum):
    TARGET = "Target"
    STABLE = "Stable"
    SADDLE = "Saddle"
    UNSTABLE = "Unstable"
    DEGENERATE = "Degenerate"


def classify_equilibrium(spectrum: Sequence[complex], band: float = ZERO_BAND) -> EquilibriumKind:
    """Stable, Saddle, Unstable (all real parts positive) or Degenerate (a real part within ``band``)."""
    re = np.real(np.asarray(spectrum, dtype=complex))
    if re.size == 0:
        raise ValueError("empty spectrum")
    if np.any(np.abs(re) <= band):
        return EquilibriumKind.DEGENERATE
    if np.all(re < 0):
        return EquilibriumKind.STABLE
    if np.all(re > 0):
        return EquilibriumKind.UNSTABLE
    return EquilibriumKind.SADDLE


@dataclass
class Equilibrium:
    x_star: np.ndarray
    residual: float
    kind: EquilibriumKind
    planner_jac: np.ndarray
    closed_loop_spectrum: list = field(default_factory=list)
    is_target: bool = False

    def to_dict(self) -> dict:
        return {
            "x_star": self.x_star.tolist(),
            "residual": self.residual,
            "kind": self.kind.value,
            "is_target": self.is_target,
            "planner_jac": self.planner_jac.tolist(),
            "closed_loop_spectrum": [[z.real, z.imag] for z in self.closed_loop_spectrum],
        }


class EquilibriumList(list):
    """List of equilibria that also records how many Newton seeds were used or dropped."""

    n_seeds: int = 0
    n_failed: int = 0


def _free(x: np.ndarray, world: WorldModel) -> bool:
    try:
        return safety_margin(x, world).d_x > 0.0
    except InsideObstacle:
        return False


def _residual(planner: MotionPlanner, x: np.ndarray, world: WorldModel, box=None) -> float:
    if box is not None and not (np.all(x >= box[0]) and np.all(x <= box[1])):
        return math.inf
    if not _free(x, world):
        return math.inf
    try:
        return float(np.linalg.norm(planner.velocity(x)))
    except (OutsideDomain, InsideObstacle):
        return math.inf


def newton_root(planner: MotionPlanner, world: WorldModel, x0, tol: float = 1e-8,
                max_iter: int = 100, max_halvings: int = 30, box=None) -> np.ndarray:
    """Damped Newton on ``v_d(x) = 0``, confined to ``box`` when given.

    Raises :class:`NonConvergence` on failure.
    """
    x = np.array(x0, dtype=float)
    res = _residual(planner, x, world, box)
    if not math.isfinite(res):
        raise NonConvergence("seed outside the free space")
    for _ in range(max_iter):
        v, J = planner.velocity_and_jacobian(x)
        try:
            dx = np.linalg.solve(J, -v)
        except np.linalg.LinAlgError:
            raise NonConvergence("singular Jacobian during Newton") from None
        if not np.all(np.isfinite(dx)):
            raise NonConvergence("non-finite Newton step")
        lam = 1.0
        for _ in range(max_halvings + 1):
            trial = x + lam * dx
            r_trial = _residual(planner, trial, world, box)
            if r_trial < res:
                break
            lam *= 0.5
        else:
            if res < tol:
                return x
            raise NonConvergence("line search failed")
        step = lam * float(np.linalg.norm(dx))
        x, res = trial, r_trial
        if res < tol and step <= 1e-9 * (1.0 + float(np.linalg.norm(x))):
            return x
    if res < tol:
        return x
    raise NonConvergence("Newton iteration limit reached")


def find_equilibria(
    planner: MotionPlanner,
    world: WorldModel,
    region: Optional[tuple] = None,
    grid_n: int = 10,
    cfg: Optional[ControllerConfig] = None,
    dedup_tol: float = 1e-6,
    residual_tol: float = 1e-8,
    keep_degenerate: bool = False,
) -> EquilibriumList:
    """Locate zeros of ``v_d`` from a ``grid_n``-per-axis seed grid over ``region``.

    ``region`` is ``(lo, hi)``; it defaults to the world's bounding box grown to
    include the target.  Newton iterates may not leave the region.  If
    ``cfg`` is given each equilibrium carries the closed-loop spectrum for that
    controller and is classified from it, otherwise from ``eig(J)``.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    if region is None:
        region = default_region(world, planner.target)
    lo, hi = (np.asarray(b, dtype=float) for b in region)
    axes = [np.linspace(lo[i], hi[i], grid_n) for i in range(lo.size)]
    out = EquilibriumList()
    roots: list[np.ndarray] = []
    for seed in itertools.product(*axes):
        seed = np.array(seed)
        if not _free(seed, world):
            continue
        out.n_seeds += 1
        try:
            root = newton_root(planner, world, seed, tol=residual_tol, box=(lo, hi))
        except NonConvergence:
            out.n_failed += 1
            continue
        if any(np.linalg.norm(root - r) < dedup_tol for r in roots):
            continue
        roots.append(root)
    target = planner.target
    # the target is always an equilibrium; make sure it is reported exactly
    roots = [r for r in roots if np.linalg.norm(r - target) >= dedup_tol]
    roots.insert(0, np.array(target, dtype=float))
    for root in roots:
        J = planner.jacobian(root)
        if abs(np.linalg.det(J)) < 1e-12 and not keep_degenerate:
            raise DegenerateEquilibrium(f"singular planner Jacobian at {root.tolist()}")
        eq = _build_equilibrium(planner, world, root, J, cfg)
        out.append(eq)
    return out


def default_region(world: WorldModel, target) -> tuple[np.ndarray, np.ndarray]:
    if world.bounded:
        return world.bounding_box()
    lo, hi = world.bounding_box(pad=1.0 + world.robot_radius)
    target = np.asarray(target, dtype=float)
    return np.minimum(lo, target - 1.0), np.maximum(hi, target + 1.0)


def _build_equilibrium(planner, world, root, J, cfg) -> Equilibrium:
    residual = float(np.linalg.norm(planner.velocity(root)))
    if cfg is None:
        spectrum = list(eigenvalues_dense(J))
    elif cfg.kind == ControllerKind.VTF:
        spectrum = list(eigenvalues_dense(assemble_jacobian_vtf(root, planner, cfg, world)))
    else:
        spectrum = list(eigenvalues_dense(assemble_jacobian_ddf(root, planner, cfg, world)))
    kind = classify_equilibrium(spectrum)
    is_target = bool(np.linalg.norm(root - planner.target) < 1e-12)
    if abs(np.linalg.det(J)) < 1e-12:
        kind = EquilibriumKind.DEGENERATE
    elif is_target and kind == EquilibriumKind.STABLE:
        kind = EquilibriumKind.TARGET
    return Equilibrium(root, residual, kind, J, spectrum, is_target)


def _kd_beta(x_star, cfg: ControllerConfig, world: WorldModel) -> float:
    d = safety_margin(x_star, world).d_x
    if not d > 0:
        raise Unsafe("equilibrium is not in the free space", d)
    return cfg.k_d * beta(d, cfg.schedule)


def potential_hessian(planner: MotionPlanner, x) -> np.ndarray:
    """Finite-difference Hessian of the planner potential (from ``J = -k1 H``)."""
    if not planner.has_potential:
        raise NoPotential("planner has no scalar potential")
    return -planner.jacobian(np.asarray(x, dtype=float)) / planner.k1


def assemble_jacobian_ddf(x_star, planner: MotionPlanner, cfg: ControllerConfig, world: WorldModel) -> np.ndarray:
    """``[[0, I], [-k1 H, -k_d beta I]]`` at ``(x*, 0)``."""
    x_star = np.asarray(x_star, dtype=float)
    kb = _kd_beta(x_star, cfg, world)
    return ddf_block(potential_hessian(planner, x_star), cfg.k1, kb)


def ddf_block(hess: np.ndarray, k1: float, kd_beta: float) -> np.ndarray:
    n = hess.shape[0]
    I = np.eye(n)
    return np.block([[np.zeros((n, n)), I], [-k1 * hess, -kd_beta * I]])


def assemble_jacobian_vtf(x_star, planner: MotionPlanner, cfg: ControllerConfig, world: WorldModel) -> np.ndarray:
    """``[[0, I], [k_d beta J, -k_d beta I + J]]`` at ``(x*, 0)``."""
    x_star = np.asarray(x_star, dtype=float)
    kb = _kd_beta(x_star, cfg, world)
    return vtf_block(planner.jacobian(x_star), kb)


def vtf_block(J: np.ndarray, kd_beta: float) -> np.ndarray:
    n = J.shape[0]
    I = np.eye(n)
    return np.block([[np.zeros((n, n)), I], [kd_beta * J, -kd_beta * I + J]])


def quadratic_relation_residual(spectrum, thetas, kd_beta: float) -> float:
    """``max_lam min_theta |lam**2 + kd_beta lam - theta|``."""
    thetas = np.asarray(thetas, dtype=complex)
    worst = 0.0
    for lam in spectrum:
        worst = max(worst, float(np.min(np.abs(lam * lam + kd_beta * lam - thetas))))
    return worst


def ddf_relation_check(x_star, planner, cfg: ControllerConfig, world: WorldModel) -> float:
    """Quadratic-relation residual of the QR spectrum of ``J_d`` at ``x*``."""
    x_star = np.asarray(x_star, dtype=float)
    kb = _kd_beta(x_star, cfg, world)
    hess = potential_hessian(planner, x_star)
    spectrum = eigenvalues_dense(ddf_block(hess, cfg.k1, kb))
    thetas = eigenvalues_dense(-cfg.k1 * hess)
    return quadratic_relation_residual(spectrum, thetas, kb)


def vtf_spectrum_check(x_star, planner, cfg: ControllerConfig, world: WorldModel) -> float:
    """Multiset distance between ``eig(J_v)`` and ``eig(J)`` plus ``n`` copies of ``-k_d beta``."""
    x_star = np.asarray(x_star, dtype=float)
    kb = _kd_beta(x_star, cfg, world)
    J = planner.jacobian(x_star)
    expected = list(eigenvalues_dense(J)) + [complex(-kb)] * J.shape[0]
    return match_multisets(eigenvalues_dense(vtf_block(J, kb)), expected)


@dataclass
class AssumptionReport:
    shell_samples: int
    min_inner_product: float
    max_hessian_norm: float
    max_vd_norm: float
    gradient_check_max_err: float
    uniqueness_violations: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _sample_box(world: WorldModel, delta_d: float) -> tuple[np.ndarray, np.ndarray]:
    if world.bounded:
        return world.bounding_box()
    return world.bounding_box(pad=world.robot_radius + delta_d)


def check_assumptions(
    planner: MotionPlanner,
    world: WorldModel,
    delta_d: float,
    n_samples: int,
    seed: int = 0,
    tie_tol: float = 1e-6,
) -> AssumptionReport:
    """Empirical look at the boundary conditions a planner must meet near obstacles.

    Points are drawn uniformly from a box around the world and kept when
    ``0 < d_x < delta_d``.  The numbers describe the samples only; they do not
    certify anything about the whole shell.
    """
    if not delta_d <= world.delta_u:
        raise ValueError("delta_d must not exceed the world's delta_u")
    rng = np.random.default_rng(seed)
    lo, hi = _sample_box(world, delta_d)
    shell = []
    free = []
    draws = 0
    while len(shell) < n_samples and draws < 100 * n_samples:
        x = rng.uniform(lo, hi)
        draws += 1
        try:
            m = safety_margin(x, world)
        except InsideObstacle:
            continue
        if m.d_x <= 0:
            continue
        if len(free) < n_samples:
            free.append(x)
        if m.d_x < delta_d:
            shell.append((x, m))
    if not shell:
        raise EmptyShell(f"no sample landed in the shell 0 < d_x < {delta_d} after {draws} draws")
    mu = math.inf
    max_h = 0.0
    grad_err = 0.0
    ties = 0
    for x, m in shell:
        try:
            v_d = planner.velocity(x)
        except (OutsideDomain, InsideObstacle):
            continue
        mu = min(mu, float(v_d @ m.eta))
        try:
            H = fd_hessian_of_distance(x, world)
            max_h = max(max_h, float(np.linalg.norm(H, "fro")))
        except DampNavError:
            pass
        h = 1e-6 * (1.0 + float(np.linalg.norm(x)))
        g = np.empty(x.size)
        try:
            for i in range(x.size):
                e = np.zeros(x.size)
                e[i] = h
                g[i] = (safety_margin(x + e, world).d_x - safety_margin(x - e, world).d_x) / (2 * h)
            grad_err = max(grad_err, float(np.linalg.norm(g - m.eta)))
        except InsideObstacle:
            pass
        dists = np.sort(all_distances(x, world))
        if dists.size > 1 and dists[1] - dists[0] < tie_tol:
            ties += 1
    max_vd = 0.0
    for x in free:
        try:
            max_vd = max(max_vd, float(np.linalg.norm(planner.velocity(x))))
        except (OutsideDomain, InsideObstacle):
            continue
    return AssumptionReport(
        shell_samples=len(shell),
        min_inner_product=mu if math.isfinite(mu) else 0.0,
        max_hessian_norm=max_h,
        max_vd_norm=max_vd,
        gradient_check_max_err=grad_err,
        uniqueness_violations=ties,
    )
