from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from dampnav.errors import InsideObstacle, SeparationViolation, ValidationError
from dampnav.geometry import (
    BoundarySphere,
    Ellipsoid,
    Sphere,
    WorldModel,
    distance_to_obstacle,
    fd_hessian_of_distance,
    obstacle_separation,
    safety_margin,
)

# Closest point on the ellipse x^2/4 + y^2 = 1 to (2, 1): 10^6 boundary samples
# refined by a bracketed scalar minimisation over the angle.
ELLIPSE_ORACLE_DIST = 0.5577801167873331
ELLIPSE_ORACLE_CLOSEST = (1.6649685430319354, 0.5540486780766909)

coord = st.floats(-20, 20, allow_nan=False)


def _ellipse_21() -> Ellipsoid:
    return Ellipsoid(center=np.zeros(2), shape=np.diag([0.25, 1.0]))


def test_sphere_distance_collinear():
    proj = distance_to_obstacle([3.0, 0.0], Sphere(center=np.zeros(2), radius=1.0))
    assert proj.dist == 2.0
    np.testing.assert_allclose(proj.closest, [1.0, 0.0], atol=1e-15)


def test_boundary_distance_radial():
    proj = distance_to_obstacle([9.0, 0.0], BoundarySphere(center=np.zeros(2), radius=10.0))
    assert proj.dist == 1.0
    np.testing.assert_allclose(proj.closest, [10.0, 0.0], atol=1e-15)


def test_ellipse_distance_matches_sampling_oracle():
    proj = distance_to_obstacle([2.0, 1.0], _ellipse_21())
    assert abs(proj.dist - ELLIPSE_ORACLE_DIST) < 1e-9
    np.testing.assert_allclose(proj.closest, ELLIPSE_ORACLE_CLOSEST, atol=1e-7)


def test_flat_ellipse_distance_matches_dense_sampling():
    e = Ellipsoid.from_axes([0.0, 0.0], (3.0, 1e-3), 0.3)
    x = np.array([0.4, 0.9])
    th = np.linspace(0.0, 2 * np.pi, 400_001)
    pts = e.center + (e.rotation @ (e.axes[:, None] * np.stack([np.cos(th), np.sin(th)]))).T
    oracle = np.min(np.linalg.norm(pts - x, axis=1))
    got = distance_to_obstacle(x, e).dist
    assert got <= oracle + 1e-12
    assert oracle - got < 1e-6


def test_ellipsoid_3d_against_angle_minimisation():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    axes = np.array([2.0, 1.0, 0.5])
    S = q @ np.diag(1 / axes ** 2) @ q.T
    e = Ellipsoid(center=np.array([1.0, -1.0, 0.5]), shape=S)
    x = np.array([3.0, 1.0, 2.0])

    def surf(a):
        u = np.array([np.cos(a[0]) * np.cos(a[1]), np.sin(a[0]) * np.cos(a[1]), np.sin(a[1])])
        return e.center + q @ (axes * u)

    best = min((minimize(lambda a: np.linalg.norm(surf(a) - x), a0, method="Nelder-Mead",
                         options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
                for a0 in [(t, p) for t in np.linspace(0, 6, 7) for p in (-1.0, 0.0, 1.0)]),
               key=lambda r: r.fun)
    proj = distance_to_obstacle(x, e)
    assert abs(proj.dist - best.fun) < 1e-8
    assert abs((proj.closest - e.center) @ S @ (proj.closest - e.center) - 1.0) < 1e-12


@pytest.mark.parametrize("ob, x", [
    (Sphere(center=np.zeros(2), radius=1.0), [0.2, 0.1]),
    (Ellipsoid(center=np.zeros(2), shape=np.diag([0.25, 1.0])), [1.0, 0.2]),
    (BoundarySphere(center=np.zeros(2), radius=5.0), [6.0, 0.0]),
])
def test_inside_obstacle_raises(ob, x):
    with pytest.raises(InsideObstacle):
        distance_to_obstacle(x, ob)


def test_safety_margin_single_sphere():
    w = WorldModel((Sphere(center=np.zeros(2), radius=1.0),), robot_radius=0.5)
    m = safety_margin([3.0, 0.0], w)
    assert m.d_x == 1.5
    assert m.active_index == 0
    np.testing.assert_allclose(m.eta, [1.0, 0.0])


def test_safety_margin_nearer_obstacle_wins():
    w = WorldModel((Sphere(center=np.array([5.0, 0.0]), radius=1.0),
                    Sphere(center=np.array([-2.0, 0.0]), radius=1.0)), robot_radius=0.5)
    m = safety_margin([0.0, 0.0], w)
    assert m.d_x == 0.5
    assert m.active_index == 1
    np.testing.assert_allclose(m.eta, [1.0, 0.0])


def test_safety_margin_ellipse():
    w = WorldModel((_ellipse_21(),), robot_radius=0.1)
    m = safety_margin([2.0, 1.0], w)
    assert abs(m.d_x - (ELLIPSE_ORACLE_DIST - 0.1)) < 1e-9
    expected = (np.array([2.0, 1.0]) - ELLIPSE_ORACLE_CLOSEST) / ELLIPSE_ORACLE_DIST
    np.testing.assert_allclose(m.eta, expected, atol=1e-7)


def test_tie_goes_to_smallest_index():
    w = WorldModel((Sphere(center=np.array([3.0, 0.0]), radius=1.0),
                    Sphere(center=np.array([-3.0, 0.0]), radius=1.0)), robot_radius=0.1)
    assert safety_margin([0.0, 0.0], w).active_index == 0


def test_fd_hessian_sphere_matches_closed_form():
    # d = |x - c| - rho has Hessian (I - eta eta^T) / |x - c|
    w = WorldModel((Sphere(center=np.zeros(2), radius=1.0),), robot_radius=0.1)
    H = fd_hessian_of_distance([3.0, 0.0], w)
    np.testing.assert_allclose(H, np.diag([0.0, 1.0 / 3.0]), atol=1e-6)
    assert np.array_equal(H, H.T)


def test_fd_hessian_off_axis_entries_vanish_on_symmetry_axis():
    w = WorldModel((Sphere(center=np.zeros(2), radius=1.0),), robot_radius=0.1)
    H = fd_hessian_of_distance([40.0, 0.0], w)
    assert abs(H[0, 1]) < 1e-9


def test_fd_hessian_second_order_convergence():
    w = WorldModel((Sphere(center=np.zeros(2), radius=1.0),), robot_radius=0.1)
    x = np.array([1.5, 1.2])
    rho = np.linalg.norm(x)
    eta = x / rho
    exact = (np.eye(2) - np.outer(eta, eta)) / rho
    e1 = np.abs(fd_hessian_of_distance(x, w, h=2e-2) - exact).max()
    e2 = np.abs(fd_hessian_of_distance(x, w, h=1e-2) - exact).max()
    assert 3.5 < e1 / e2 < 4.5


def test_fd_hessian_stencil_crossing_raises():
    w = WorldModel((Sphere(center=np.zeros(2), radius=1.0),), robot_radius=0.1)
    with pytest.raises(InsideObstacle):
        fd_hessian_of_distance([1.0 + 1e-6, 0.0], w, h=1e-3)


def test_separation_validator_rejects_close_obstacles():
    w = WorldModel((Sphere(center=np.zeros(2), radius=1.0),
                    Sphere(center=np.array([3.0, 0.0]), radius=1.0)), robot_radius=0.6)
    with pytest.raises(SeparationViolation) as err:
        w.check_separation()
    assert err.value.path == "world.obstacles"
    WorldModel(w.obstacles, robot_radius=0.4).check_separation()


def test_boundary_must_come_first():
    with pytest.raises(ValidationError):
        WorldModel((Sphere(center=np.zeros(2), radius=1.0),
                    BoundarySphere(center=np.zeros(2), radius=9.0)), robot_radius=0.1)


def test_mixed_dimensions_rejected():
    with pytest.raises(ValidationError):
        WorldModel((Sphere(center=np.zeros(2), radius=1.0),
                    Sphere(center=np.ones(3) * 5, radius=1.0)), robot_radius=0.1)


def test_ellipse_separation_against_sampling():
    a = Ellipsoid.from_axes([0.0, 0.0], (2.0, 0.5), 0.4)
    b = Ellipsoid.from_axes([4.0, 1.0], (1.0, 0.3), -0.7)
    th = np.linspace(0, 2 * np.pi, 3000, endpoint=False)
    circ = np.stack([np.cos(th), np.sin(th)])
    pa = a.center + (a.rotation @ (a.axes[:, None] * circ)).T
    pb = b.center + (b.rotation @ (b.axes[:, None] * circ)).T
    oracle = np.min(np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2))
    got = obstacle_separation(a, b)
    assert got <= oracle + 1e-9
    assert oracle - got < 1e-3


def test_sphere_separation_exact():
    a = Sphere(center=np.zeros(2), radius=1.0)
    b = Sphere(center=np.array([3.0, 4.0]), radius=2.0)
    assert obstacle_separation(a, b) == 2.0
    assert obstacle_separation(BoundarySphere(center=np.zeros(2), radius=10.0), b) == 3.0


# ---- properties ---------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.tuples(coord, coord), st.tuples(coord, coord), st.floats(0.1, 5.0))
def test_sphere_margin_is_exact(x, c, rho):
    x, c = np.array(x), np.array(c)
    if np.linalg.norm(x - c) <= rho * (1 + 1e-9):
        return
    w = WorldModel((Sphere(center=c, radius=rho),), robot_radius=0.05)
    m = safety_margin(x, w)
    assert abs(m.d_x - (np.linalg.norm(x - c) - rho - 0.05)) <= 1e-14 * (1 + np.linalg.norm(x - c))
    assert abs(np.linalg.norm(m.eta) - 1.0) < 1e-12


ellipse_params = st.tuples(
    st.floats(0.05, 4.0), st.floats(0.05, 4.0), st.floats(0.0, math.pi),
    st.floats(-6, 6), st.floats(-6, 6),
)


@settings(max_examples=150, deadline=None)
@given(ellipse_params)
def test_ellipse_projection_optimal(p):
    a, b, ang, px, py = p
    e = Ellipsoid.from_axes([0.0, 0.0], (a, b), ang)
    x = np.array([px, py])
    if e.contains_interior(x):
        return
    proj = distance_to_obstacle(x, e)
    # the closest point lies on the boundary
    d = proj.closest - e.center
    assert abs(d @ e.shape @ d - 1.0) < 1e-9
    rng = np.random.default_rng(0)
    th = rng.uniform(0, 2 * np.pi, 1000)
    samples = (e.rotation @ (e.axes[:, None] * np.stack([np.cos(th), np.sin(th)]))).T
    assert np.all(np.linalg.norm(x - proj.closest) <= np.linalg.norm(samples - x, axis=1) + 1e-9)


@settings(max_examples=100, deadline=None)
@given(ellipse_params)
def test_eta_is_directional_derivative(p):
    a, b, ang, px, py = p
    e = Ellipsoid.from_axes([0.0, 0.0], (a, b), ang)
    x = np.array([px, py])
    w = WorldModel((e,), robot_radius=0.01)
    try:
        m = safety_margin(x, w)
    except InsideObstacle:
        return
    h = 1e-6 * (1 + np.linalg.norm(x))
    if m.d_x < 10 * h:
        return
    deriv = (safety_margin(x + h * m.eta, w).d_x - safety_margin(x - h * m.eta, w).d_x) / (2 * h)
    assert abs(np.linalg.norm(m.eta) - 1.0) < 1e-12
    assert abs(deriv - 1.0) < 1e-5
