import numpy as np
import pytest
from scipy.stats import kstest

from builders import consensus_problem
from partdd.duals import DualLayout, dual_gradient
from partdd.engine_async import TimerModel, run_async, run_coordinate_reference, step_size_async
from partdd.graph import Graph, erdos_renyi, path_graph
from partdd.scenarios import generate_random_qp


def test_single_node_fires_do_nothing():
    prob = consensus_problem(Graph(1, ()), (2,), [1.0, -1.0])
    res = run_async(prob, events=20)
    assert len(res.trace) == 21
    assert len({r.dual_cost for r in res.trace}) == 1
    assert res.duals.size == 0
    assert all(r.cascade_size == 0 for r in res.trace[1:])


def test_two_node_fixture_high_probability(qp2, qp2_star):
    f = qp2_star.f
    hits = 0
    for seed in range(20):
        res = run_async(qp2, events=50 * qp2.n, seed=seed)
        hits += abs(res.trace[-1].dual_cost - f) <= 1e-4 * abs(f)
    assert hits >= 19


def test_message_trigger_rule_on_path():
    prob = generate_random_qp(path_graph(3), 2)
    deg = [prob.graph.degree(i) for i in range(3)]
    for k in range(8):
        a = run_async(prob, events=k, seed=4)
        b = run_async(prob, events=k + 1, seed=4)
        i = b.fired[-1]
        diff = [sb.solves - sa.solves for sa, sb in zip(a.states, b.states)]
        # the fired node solves before its dual step and once more after it
        assert diff[i] == 2
        for j in range(3):
            if j != i:
                assert diff[j] == (1 if j in prob.graph.neighbors[i] else 0)
        assert b.trace[-1].cascade_size == 3 * deg[i] + sum(deg[j] for j in prob.graph.neighbors[i])


def test_selection_is_uniform():
    n, N = 5, 10_000
    prob = consensus_problem(path_graph(n), (1,) * n, np.zeros(n))
    res = run_async(prob, events=N, seed=9)
    counts = np.bincount(res.fired, minlength=n)
    p = 1.0 / n
    assert np.all(np.abs(counts - N * p) <= 3 * np.sqrt(N * p * (1 - p)))


def test_timer_draws_are_exponential():
    tm = TimerModel(3, seed=21, rate=2.0)
    for i in range(3):
        draws = [tm.draw(i) for _ in range(5000)]
        assert kstest(draws, "expon", args=(0, 0.5)).pvalue > 0.01


def test_timer_streams_are_independent_of_other_nodes():
    a = TimerModel(4, seed=1)
    b = TimerModel(4, seed=1)
    for _ in range(10):
        a.draw(0)
    assert a.draw(3) == b.draw(3)


def test_freshness_invariant(qp6):
    run_async(qp6, events=80, seed=3, check_freshness=True)


def test_reproducible(qp6):
    a = run_async(qp6, events=50, seed=7)
    b = run_async(qp6, events=50, seed=7)
    c = run_async(qp6, events=50, seed=8)
    assert [vars(r) for r in a.trace] == [vars(r) for r in b.trace]
    assert a.fired != c.fired


def test_dual_cost_never_decreases_per_fire(qp6, qp6_star):
    res = run_async(qp6, events=400, seed=1)
    q = np.array([r.dual_cost for r in res.trace])
    assert np.all(q <= qp6_star.f + 1e-8)
    assert np.all(np.diff(q) >= -1e-9 * (1 + abs(qp6_star.f)))
    assert [r.t_over_n for r in res.trace[:3]] == [0.0, 1 / qp6.n, 2 / qp6.n]


def test_equivalence_with_coordinate_reference(qp6):
    a = run_async(qp6, events=300, seed=5, record_duals=True)
    c = run_coordinate_reference(qp6, 300, selection=a.fired, record_duals=True)
    dev = max(float(np.max(np.abs(u - v))) for u, v in zip(a.dual_history, c.dual_history))
    assert dev <= 1e-10
    assert len(a.dual_history) == len(c.dual_history) == 301


def test_coordinate_reference_constant_at_consensus():
    prob = consensus_problem(erdos_renyi(4, 0.7, 1), (1, 2, 1, 1), np.arange(5.0))
    res = run_coordinate_reference(prob, 25, seed=0)
    assert not np.any(res.duals)


def test_coordinate_step_is_a_block_of_the_sync_update(qp2):
    alpha = 0.1
    res = run_coordinate_reference(qp2, 1, selection=[1], alpha=alpha)
    lay = DualLayout.of(qp2)
    g = dual_gradient(qp2, lay.zeros())
    expect = lay.zeros()
    expect[lay.block(1)] = alpha * g[lay.block(1)]
    np.testing.assert_allclose(res.duals, expect, atol=1e-14)


def test_async_steps_skip_the_factor_n(qp6):
    from partdd.engine_sync import step_size_sync

    np.testing.assert_allclose(step_size_async(qp6), qp6.n * step_size_sync(qp6))


def test_horizon_required(qp2):
    with pytest.raises(ValueError):
        run_async(qp2)
    res = run_async(qp2, until=3.0, seed=0)
    assert all(r.sim_time <= 3.0 for r in res.trace)
