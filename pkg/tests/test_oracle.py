import numpy as np
import pytest

from builders import consensus_problem
from partdd.graph import erdos_renyi
from partdd.oracle import OracleError, OracleSolution, kkt_residual, solve_centralized
from partdd.scenarios import generate_random_qp, random_wls


def test_decoupled_instance_returns_local_minimizers():
    target = np.linspace(-2, 2, 7)
    prob = consensus_problem(erdos_renyi(5, 0.5, 3), (1, 2, 1, 2, 1), target)
    sol = solve_centralized(prob)
    np.testing.assert_allclose(sol.x, target, atol=1e-10)
    assert sol.f == pytest.approx(0.0, abs=1e-12)


def test_unconstrained_wls_closed_form():
    from partdd.oracle import aggregate_quadratic

    prob = random_wls(erdos_renyi(6, 0.4, 8), 8)
    Q, r, _ = aggregate_quadratic(prob)
    x_cf = np.linalg.solve(2 * Q, -r)
    for method in ("enumeration", "projected_gradient"):
        np.testing.assert_allclose(solve_centralized(prob, method=method).x, x_cf, atol=1e-7)


@pytest.mark.parametrize("seed", range(5))
def test_two_routes_agree(seed):
    prob = generate_random_qp(erdos_renyi(6, 0.5, seed), seed)
    a = solve_centralized(prob, method="enumeration")
    b = solve_centralized(prob, method="projected_gradient")
    assert abs(a.f - b.f) <= 1e-7 * max(1.0, abs(a.f))
    assert a.kkt_residual <= 1e-6 and b.kkt_residual <= 1e-5
    assert prob.max_violation(a.x) <= 1e-9


def test_kkt_residual_flags_a_wrong_point(qp6, qp6_star):
    assert kkt_residual(qp6, qp6_star.x) <= 1e-6
    assert kkt_residual(qp6, qp6_star.x + 0.1) > 1e-3


def test_solution_round_trip(tmp_path, qp2_star):
    path = tmp_path / "sol.json"
    qp2_star.save(path)
    back = OracleSolution.load(path)
    np.testing.assert_array_equal(back.x, qp2_star.x)
    assert back.f == qp2_star.f and back.method == qp2_star.method


def test_enumeration_refuses_large_instances():
    prob = generate_random_qp(erdos_renyi(10, 0.5, 0), 0, rows_range=(2, 2))
    with pytest.raises(OracleError):
        solve_centralized(prob, method="enumeration")
    with pytest.raises(ValueError):
        solve_centralized(prob, method="simplex")
