"""Asynchronous partitioned dual decomposition as a discrete-event simulation.

Every node runs an idle/awake state machine driven by an exponential timer:

* ``TimerFire(i)``: i re-solves and broadcasts its primal copies, takes a
  dual ascent step on all its edge pairs using the neighbor copies it holds,
  broadcasts the new duals, re-solves once more for the updated duals and
  broadcasts the refreshed copies, then draws a new waiting time.
* ``DualArrival(j -> i)``: i stores the duals, wakes, re-solves and
  broadcasts its primal copies. No dual step.
* ``PrimalArrival(j -> i)``: i stores the copies. It does not wake.

Messages have zero latency and are always processed before the next timer,
so the cascade triggered by a fire completes before anything else happens.
One iteration ``t`` is one timer fire.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .duals import DualLayout, lipschitz_constants
from .engine_sync import (
    EngineError,
    NodeState,
    collect_duals,
    diag_primal,
    init_states,
    local_solve,
    max_disagreement,
)
from .local_solver import DEFAULT_TOL, LocalSolveError, solve_local
from .trace import TraceRecord

__all__ = [
    "Event",
    "TimerModel",
    "AsyncNodeState",
    "AsyncResult",
    "CoordinateResult",
    "step_size_async",
    "run_async",
    "run_coordinate_reference",
    "FreshnessError",
]

TIMER, DUAL, PRIMAL = "timer", "dual", "primal"
# messages sort ahead of timers at equal times
_PRIORITY = {DUAL: 0, PRIMAL: 0, TIMER: 1}


class FreshnessError(AssertionError):
    pass


@dataclass(order=True)
class Event:
    time: float
    priority: int
    seq: int
    kind: str = field(compare=False)
    src: int = field(compare=False)
    dst: int = field(compare=False)
    payload: tuple = field(compare=False, default=())


class TimerModel:
    """I.i.d. exponential waiting times, one PCG64 substream per node.

    The substream of node ``i`` is seeded with ``SeedSequence(seed, spawn_key=(i,))``;
    waiting times use the inverse CDF ``-log(1 - U) / rate``.
    """

    def __init__(self, n: int, seed: int, rate: float = 1.0):
        if rate <= 0:
            raise ValueError("timer rate must be positive")
        self.rate = float(rate)
        self.streams = [
            np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i,))))
            for i in range(n)
        ]

    def draw(self, i: int) -> float:
        u = self.streams[i].random()
        return -np.log1p(-u) / self.rate


@dataclass
class AsyncNodeState(NodeState):
    mode: str = "idle"
    clock_start: float = 0.0
    deadline: float = 0.0  # T_i, measured from clock_start
    value: float = 0.0

    def tau(self, now: float) -> float:
        return now - self.clock_start


def step_size_async(problem, factor: float = 1.0) -> np.ndarray:
    """alpha_i = factor / L_i; needs only neighbor sigmas, not n."""
    if factor <= 0:
        raise ValueError("step-size factor must be positive")
    L = lipschitz_constants(problem)
    with np.errstate(divide="ignore"):
        return np.where(L > 0, factor / L, 0.0)


@dataclass
class AsyncResult:
    trace: list[TraceRecord]
    states: list[AsyncNodeState]
    alpha: np.ndarray
    fired: list[int]
    duals: np.ndarray
    dual_history: list[np.ndarray] | None = None


def _solve(problem, s: AsyncNodeState, t: int, tol: float):
    rep = local_solve(problem, s, t, tol)
    s.value = rep.value
    return rep


def _check_fresh(problem, states, tol, t, atol=1e-9):
    lam = collect_duals(problem, states)
    layout = DualLayout.of(problem)
    fresh = {}
    for s in states:
        rep = solve_local(problem.objectives[s.owner], problem.constraints[s.owner],
                          layout.offset(s.owner, lam), tol=tol)
        fresh[s.owner] = rep.y
        if np.max(np.abs(rep.y - s.y)) > atol:
            raise FreshnessError(f"t={t}: node {s.owner} holds a stale minimizer")
    for s in states:
        for j in s.hood.neighbors:
            mine_at_j, theirs_at_j = s.copies[j]
            hj = states[j].hood
            if (np.max(np.abs(mine_at_j - fresh[j][hj.slots[s.owner]])) > atol
                    or np.max(np.abs(theirs_at_j - fresh[j][hj.slots[j]])) > atol):
                raise FreshnessError(f"t={t}: node {s.owner} holds stale copies from {j}")


def run_async(problem, events: int | None = None, until: float | None = None, seed: int = 0,
              alpha=None, factor: float = 1.0, lam0=None, x_star=None, rate: float = 1.0,
              tol: float = DEFAULT_TOL, check_freshness: bool = False,
              record_duals: bool = False, stop=None) -> AsyncResult:
    """Simulate until ``events`` timer fires or sim-time ``until``, whichever comes first.

    Record ``t = 0`` holds q(Lambda(0)); record ``t >= 1`` is written after
    the t-th timer fire and its message cascade.
    """
    if events is None and until is None:
        raise ValueError("give a horizon: events and/or until")
    n = problem.n
    alpha = step_size_async(problem, factor) if alpha is None else np.broadcast_to(
        np.asarray(alpha, dtype=float), (n,))
    base = init_states(problem, alpha, lam0)
    states = [AsyncNodeState(**vars(s)) for s in base]
    timers = TimerModel(n, seed, rate)
    x_star = None if x_star is None else np.asarray(x_star, dtype=float)
    seq = itertools.count()
    heap: list[Event] = []

    def push(time, kind, src, dst, payload=()):
        heapq.heappush(heap, Event(time, _PRIORITY[kind], next(seq), kind, src, dst, payload))

    def broadcast_primal(s, now):
        for j in s.hood.neighbors:
            push(now, PRIMAL, s.owner, j, s.primal_message(j))
        return len(s.hood.neighbors)

    def record(t, now, fired, cascade, messages):
        return TraceRecord(
            t=t,
            dual_cost=float(sum(s.value for s in states)),
            primal_err=None if x_star is None else float(np.linalg.norm(diag_primal(problem, states) - x_star)),
            disagreement=max_disagreement(states) if any(s.hood.neighbors for s in states) else 0.0,
            messages=messages,
            solver_residual=max(s.residual for s in states),
            sim_time=now,
            node_fired=fired,
            cascade_size=cascade,
            t_over_n=t / n,
        )

    # start-up: every node solves once and shares its copies, then arms its timer
    for s in states:
        _solve(problem, s, 0, tol)
    for s in states:
        for j in s.hood.neighbors:
            states[j].copies[s.owner] = s.primal_message(j)
    for s in states:
        s.deadline = timers.draw(s.owner)
        push(s.deadline, TIMER, s.owner, s.owner)
    trace = [record(0, 0.0, None, 0, 0)]
    fired: list[int] = []
    history = [collect_duals(problem, states)] if record_duals else None
    if check_freshness:
        _check_fresh(problem, states, tol, 0)

    t = 0
    while heap and (events is None or t < events):
        ev = heapq.heappop(heap)
        if until is not None and ev.time > until:
            break
        assert ev.kind == TIMER, "message left over from a completed cascade"
        now = ev.time
        i = ev.src
        s = states[i]
        t += 1
        fired.append(i)
        try:
            s.mode = "awake"
            _solve(problem, s, t, tol)
            messages = broadcast_primal(s, now)
            a = s.alpha
            own_i = s.y[s.hood.slots[i]]
            for j in s.hood.neighbors:
                pair = s.duals[j]
                mine_at_j, theirs_at_j = s.copies[j]
                pair.own = pair.own + a * (own_i - mine_at_j)
                pair.nbr = pair.nbr + a * (s.y[s.hood.slots[j]] - theirs_at_j)
            for j in s.hood.neighbors:
                push(now, DUAL, i, j, s.dual_message(j))
                messages += 1
            # keep y^(i) the minimizer for the duals it now holds
            _solve(problem, s, t, tol)
            messages += broadcast_primal(s, now)
            s.clock_start = now
            s.deadline = timers.draw(i)
            s.mode = "idle"
            push(now + s.deadline, TIMER, i, i)
            cascade = 0
            while heap and heap[0].kind != TIMER:
                msg = heapq.heappop(heap)
                cascade += 1
                r = states[msg.dst]
                if msg.kind == PRIMAL:
                    r.copies[msg.src] = msg.payload
                else:
                    r.recv_duals[msg.src] = msg.payload
                    r.mode = "awake"
                    _solve(problem, r, t, tol)
                    messages += broadcast_primal(r, now)
                    r.mode = "idle"
        except LocalSolveError as exc:  # pragma: no cover - local_solve wraps these
            raise EngineError(i, t, exc) from exc
        trace.append(record(t, now, i, cascade, messages))
        if record_duals:
            history.append(collect_duals(problem, states))
        if check_freshness:
            _check_fresh(problem, states, tol, t)
        if stop is not None and stop(trace[-1]):
            break
    return AsyncResult(trace, states, np.asarray(alpha), fired, collect_duals(problem, states), history)


@dataclass
class CoordinateResult:
    trace: list[TraceRecord]
    duals: np.ndarray
    selected: list[int]
    dual_history: list[np.ndarray] | None = None


def run_coordinate_reference(problem, iterations: int, seed: int = 0, selection=None, alpha=None,
                             factor: float = 1.0, lam0=None, x_star=None, tol: float = DEFAULT_TOL,
                             record_duals: bool = False) -> CoordinateResult:
    """Centralized randomized block-coordinate ascent on the dual.

    At iteration t a node i_t is drawn uniformly (or taken from
    ``selection``) and block Lambda_{i_t} moves by alpha_{i_t} times its
    partial gradient, computed from fresh minimizers of i_t and its neighbors.
    """
    n = problem.n
    layout = DualLayout.of(problem)
    part = problem.partition
    alpha = step_size_async(problem, factor) if alpha is None else np.broadcast_to(
        np.asarray(alpha, dtype=float), (n,))
    lam = layout.zeros() if lam0 is None else np.array(lam0, dtype=float)
    if selection is None:
        rng = np.random.default_rng(seed)
        selection = rng.integers(0, n, size=iterations)
    selection = [int(v) for v in selection[:iterations]]
    if len(selection) < iterations:
        raise ValueError("selection stream shorter than the number of iterations")
    x_star = None if x_star is None else np.asarray(x_star, dtype=float)

    reports = {}

    def refresh(nodes, t):
        for k in nodes:
            try:
                reports[k] = solve_local(problem.objectives[k], problem.constraints[k],
                                         layout.offset(k, lam), tol=tol)
            except LocalSolveError as exc:
                raise EngineError(k, t, exc) from exc

    def record(t, sel):
        ys = [reports[k].y for k in range(n)]
        x = np.concatenate([ys[k][part.slot_of(k, k)] for k in range(n)])
        dis = 0.0
        for k in range(n):
            for j in part.graph.neighbors[k]:
                dis = max(dis, float(np.linalg.norm(ys[k][part.slot_of(k, k)] - ys[j][part.slot_of(j, k)])))
        return TraceRecord(
            t=t,
            dual_cost=float(sum(reports[k].value for k in range(n))),
            primal_err=None if x_star is None else float(np.linalg.norm(x - x_star)),
            disagreement=dis,
            messages=0,
            solver_residual=max(reports[k].residual for k in range(n)),
            node_fired=sel,
            t_over_n=t / n,
        )

    refresh(range(n), 0)
    trace = [record(0, None)]
    history = [lam.copy()] if record_duals else None
    for t, i in enumerate(selection, start=1):
        a = alpha[i]
        yi = reports[i].y
        for j in part.graph.neighbors[i]:
            yj = reports[j].y
            si, sj = layout.self_part(i, j), layout.nbr_part(i, j)
            lam[si] = lam[si] + a * (yi[part.slot_of(i, i)] - yj[part.slot_of(j, i)])
            lam[sj] = lam[sj] + a * (yi[part.slot_of(i, j)] - yj[part.slot_of(j, j)])
        refresh((i,) + part.graph.neighbors[i], t)
        trace.append(record(t, i))
        if record_duals:
            history.append(lam.copy())
    return CoordinateResult(trace, lam, selection, history)
