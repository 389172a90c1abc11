import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq, nnls

from partdd.local_solver import (
    InfeasibleConstraintError,
    LocalSolveError,
    enumerate_active_sets,
    project_polyhedron,
    solve_local,
)
from partdd.problem import PolyhedralConstraint, QuadraticObjective, UtilityObjective


def _box(d, r=1.0):
    return PolyhedralConstraint(np.zeros((0, d)), [], -r * np.ones(d), r * np.ones(d))


def _random_qp(seed, d=3, k=2):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((d, d))
    obj = QuadraticObjective(M @ M.T + 0.5 * np.eye(d), rng.standard_normal(d) * 10)
    A = rng.standard_normal((k, d))
    con = PolyhedralConstraint(A, A @ rng.standard_normal(d) + rng.uniform(0.1, 1.0, k),
                               -50 * np.ones(d), 50 * np.ones(d))
    return obj, con, rng.standard_normal(d) * 5


@pytest.mark.parametrize("method", ["active_set", "apg"])
def test_box_cases(method):
    obj = QuadraticObjective(np.eye(4), np.zeros(4))
    rep = solve_local(obj, _box(4), method=method)
    np.testing.assert_allclose(rep.y, 0.0, atol=1e-9)
    rep = solve_local(obj, _box(4), c=np.array([-4.0, 0, 0, 0]), method=method)
    np.testing.assert_allclose(rep.y, [1.0, 0, 0, 0], atol=1e-9)
    assert rep.value == pytest.approx(1.0 - 4.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_matches_enumeration(seed):
    obj, con, c = _random_qp(seed)
    y_ref, _, _ = enumerate_active_sets(obj.Q, obj.r + c, np.vstack([con.A, np.eye(3), -np.eye(3)]),
                                        np.concatenate([con.b, con.upper, -con.lower]))
    for method in ("active_set", "apg"):
        y = solve_local(obj, con, c, method=method).y
        np.testing.assert_allclose(y, y_ref, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_start_point_invariance(seed):
    obj, con, c = _random_qp(seed)
    tol = 1e-10
    a = solve_local(obj, con, c, tol=tol, method="apg", y0=np.zeros(3)).y
    b = solve_local(obj, con, c, tol=tol, method="apg", y0=np.full(3, 40.0)).y
    # fixed-point residual tol bounds the distance by tol * L / sigma
    assert np.linalg.norm(a - b) <= 10 * tol * obj.smoothness / obj.sigma


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_apg_objective_monotone_with_restart(seed):
    obj, con, c = _random_qp(seed)
    values = []
    solve_local(obj, con, c, method="apg", callback=lambda it, y, v: values.append(v))
    assert np.all(np.diff(values) <= 1e-12 * (1 + np.abs(values[:-1])))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_kkt_certificate(seed):
    obj, con, c = _random_qp(seed)
    y = solve_local(obj, con, c).y
    G = np.vstack([con.A, np.eye(3), -np.eye(3)])
    h = np.concatenate([con.b, con.upper, -con.lower])
    act = G @ y - h >= -1e-9
    grad = obj.gradient(y) + c
    if not act.any():
        assert np.linalg.norm(grad) <= 1e-8
        return
    # least squares multipliers without a sign constraint, then check the sign
    mu = np.linalg.lstsq(G[act].T, -grad, rcond=None)[0]
    assert mu.min() >= -1e-8
    _, res = nnls(G[act].T, -grad)
    assert res <= 1e-8


@pytest.mark.parametrize("method", ["auto", "newton", "apg"])
def test_utility_objective(method):
    obj = UtilityObjective([0.05, 0.05], "log", weight=2.0, upper=10.0)
    con = PolyhedralConstraint([[1.0, 1.0]], [1.0], [0, 0], [10, 10])
    c = np.array([0.0, -1.5])
    rep = solve_local(obj, con, c=c, method=method)
    assert rep.method == ("newton" if method == "auto" else method) and rep.ok
    # on the active row x0 + x1 = 1 both partials agree: -2/(x+1) + 0.1x = 0.1(1-x) - 1.5
    x0 = brentq(lambda x: -2 / (x + 1) + 0.1 * x - 0.1 * (1 - x) + 1.5, 0.0, 1.0, xtol=1e-14)
    np.testing.assert_allclose(rep.y, [x0, 1 - x0], atol=1e-7)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), scale=st.sampled_from([0.1, 1.0, 10.0]))
def test_newton_agrees_with_apg_on_utilities(seed, scale):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 5))
    kind = rng.choice(["log", "quadratic"])
    obj = UtilityObjective(rng.uniform(0.01, 0.2, d), kind, weight=rng.uniform(0.5, 5.0),
                           curvature=rng.uniform(0.0, 1.0), upper=10.0)
    A = np.abs(rng.standard_normal((2, d)))
    con = PolyhedralConstraint(A, A @ np.full(d, 1.0) + 0.5, np.zeros(d), np.full(d, 10.0))
    c = rng.standard_normal(d) * scale
    a = solve_local(obj, con, c, method="newton")
    b = solve_local(obj, con, c, method="apg")
    np.testing.assert_allclose(a.y, b.y, atol=1e-7)
    # APG iterates are feasible only up to round-off, so its value may dip slightly below
    assert con.violation(a.y) <= 1e-12
    assert a.value <= b.value + 1e-8 * (1 + abs(b.value))


def test_projection_box_halfspace_vs_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(20):
        con = PolyhedralConstraint(rng.standard_normal((1, 3)), [0.3], -np.ones(3), np.ones(3))
        p = rng.standard_normal(3) * 3
        G = np.vstack([con.A, np.eye(3), -np.eye(3)])
        h = np.concatenate([con.b, con.upper, -con.lower])
        y_ref, _, _ = enumerate_active_sets(np.eye(3), -2 * p, G, h)
        np.testing.assert_allclose(project_polyhedron(p, con), y_ref, atol=1e-9)


def test_apg_with_exact_projection_terminates():
    # with Dykstra projections APG ran ~1e5 iterations here without meeting the residual test
    rng = np.random.default_rng(10)
    d = int(rng.integers(1, 5))
    kind = rng.choice(["log", "quadratic"])
    obj = UtilityObjective(rng.uniform(0.01, 0.2, d), kind, weight=rng.uniform(0.5, 5.0),
                           curvature=rng.uniform(0.0, 1.0), upper=10.0)
    A = np.abs(rng.standard_normal((2, d)))
    con = PolyhedralConstraint(A, A @ np.full(d, 1.0) + 0.5, np.zeros(d), np.full(d, 10.0))
    c = rng.standard_normal(d) * 10.0
    rep = solve_local(obj, con, c, method="apg")
    assert rep.ok and rep.iterations < 1000
    np.testing.assert_allclose(rep.y, solve_local(obj, con, c, method="newton").y, atol=1e-7)


def test_projection_high_dimension():
    # above the exact-projection size: simplex-like set, reference by bisection on the shift
    d = 80
    p = np.random.default_rng(3).uniform(-0.5, 1.5, d)
    con = PolyhedralConstraint(np.ones((1, d)), [5.0], np.zeros(d), np.ones(d))
    tau = brentq(lambda t: np.clip(p - t, 0.0, 1.0).sum() - 5.0, 0.0, 2.0, xtol=1e-15)
    np.testing.assert_allclose(project_polyhedron(p, con), np.clip(p - tau, 0.0, 1.0), atol=1e-8)


def test_errors():
    obj = QuadraticObjective(np.eye(2), np.zeros(2))
    empty = PolyhedralConstraint([[1.0, 0.0], [-1.0, 0.0]], [-1.0, -1.0], [-5, -5], [5, 5])
    with pytest.raises(InfeasibleConstraintError):
        solve_local(obj, empty)
    obj, con, c = _random_qp(0)
    with pytest.raises(LocalSolveError) as info:
        solve_local(obj, con, c, method="apg", max_iter=2, tol=1e-15)
    assert info.value.report is not None
    with pytest.raises(ValueError):
        solve_local(obj, con, c, method="newton")
    with pytest.raises(ValueError):
        solve_local(UtilityObjective([0.1], "log", upper=1.0), _box(1), method="active_set")


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), scale=st.sampled_from([1e2, 1e4, 1e6]))
def test_degenerate_vertices(seed, scale):
    # huge linear terms push the minimizer into box corners where general rows may also bind
    rng = np.random.default_rng(seed)
    d = 2
    M = rng.standard_normal((d, d))
    obj = QuadraticObjective(M @ M.T + np.eye(d), np.zeros(d))
    A = np.vstack([[1.0, 1.0], rng.standard_normal((1, d))])
    con = PolyhedralConstraint(A, [2.0, 5.0], -np.ones(d), np.ones(d))
    c = rng.standard_normal(d) * scale
    G = np.vstack([A, np.eye(d), -np.eye(d)])
    h = np.concatenate([con.b, con.upper, -con.lower])
    y_ref, _, _ = enumerate_active_sets(obj.Q, c, G, h)
    rep = solve_local(obj, con, c, method="active_set")
    np.testing.assert_allclose(rep.y, y_ref, atol=1e-8)
