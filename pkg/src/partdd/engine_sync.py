"""Synchronous partitioned dual decomposition, simulated round by round.

Each round has two barriers. First every node minimizes its local problem
with its current duals and sends each neighbor j the copies (x_j^(i), x_i^(i)).
Then every node takes a scaled dual ascent step on each edge pair and sends
(lam_i^(i,j), lam_j^(i,j)) to j.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .duals import DualLayout, assemble_offset, lipschitz_constants
from .local_solver import DEFAULT_TOL, LocalSolveError, solve_local
from .trace import TraceRecord

__all__ = [
    "EdgeDualPair",
    "NodeState",
    "EngineError",
    "SyncResult",
    "step_size_sync",
    "run_sync",
    "init_states",
    "collect_duals",
    "diag_primal",
]


class EngineError(RuntimeError):
    def __init__(self, node: int, t: int, cause: Exception):
        super().__init__(f"local solve failed at node {node}, iteration {t}: {cause}")
        self.node, self.t, self.cause = node, t, cause


@dataclass
class EdgeDualPair:
    """lam_i^(i,j) (own) and lam_j^(i,j) (nbr) held by node ``owner``."""

    owner: int
    neighbor: int
    own: np.ndarray
    nbr: np.ndarray


@dataclass
class NodeState:
    owner: int
    hood: object
    alpha: float
    y: np.ndarray
    duals: dict[int, EdgeDualPair]
    # message buffers: last copies (x_i^(j), x_j^(j)) and duals (lam_j^(j,i), lam_i^(j,i)) from j
    copies: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    recv_duals: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    residual: float = 0.0
    solves: int = 0
    sent: int = 0  # outbound messages built so far

    def offset(self) -> np.ndarray:
        nbrs = self.hood.neighbors
        return assemble_offset(
            self.hood,
            [self.duals[j].own for j in nbrs],
            [self.duals[j].nbr for j in nbrs],
            [self.recv_duals[j][0] for j in nbrs],
            [self.recv_duals[j][1] for j in nbrs],
        )

    def owned_blocks(self) -> int:
        """Block variables held as processor state: y^(i) blocks plus two per edge pair."""
        return len(self.hood.members) + 2 * len(self.duals)

    def primal_message(self, j: int):
        self.sent += 1
        return self.y[self.hood.slots[j]].copy(), self.y[self.hood.slots[self.owner]].copy()

    def dual_message(self, j: int):
        self.sent += 1
        pair = self.duals[j]
        return pair.own.copy(), pair.nbr.copy()


def step_size_sync(problem, factor: float = 1.0) -> np.ndarray:
    """alpha_i = factor / (n L_i); factor in (0, 1] stays within the convergence bound."""
    if factor <= 0:
        raise ValueError("step-size factor must be positive")
    L = lipschitz_constants(problem)
    with np.errstate(divide="ignore"):
        return np.where(L > 0, factor / (problem.n * L), 0.0)


def init_states(problem, alpha, lam0=None) -> list[NodeState]:
    layout = DualLayout.of(problem)
    lam0 = layout.zeros() if lam0 is None else np.asarray(lam0, dtype=float)
    if lam0.shape != (layout.size,):
        raise ValueError(f"dual vector must have length {layout.size}")
    part = problem.partition
    states = []
    for i in range(problem.n):
        hood = part.hoods[i]
        duals = {
            j: EdgeDualPair(i, j, lam0[layout.self_part(i, j)].copy(), lam0[layout.nbr_part(i, j)].copy())
            for j in hood.neighbors
        }
        states.append(NodeState(i, hood, float(alpha[i]), np.zeros(hood.dim), duals))
    # initial dual exchange so every node knows its neighbors' multipliers
    for s in states:
        for j in s.hood.neighbors:
            states[j].recv_duals[s.owner] = s.dual_message(j)
    return states


def collect_duals(problem, states) -> np.ndarray:
    layout = DualLayout.of(problem)
    lam = layout.zeros()
    for s in states:
        for j, pair in s.duals.items():
            lam[layout.self_part(s.owner, j)] = pair.own
            lam[layout.nbr_part(s.owner, j)] = pair.nbr
    return lam


def diag_primal(problem, states) -> np.ndarray:
    """Stack of the self copies x_i^(i)."""
    x = np.zeros(problem.layout.total)
    for s in states:
        x[problem.layout.block(s.owner)] = s.y[s.hood.slots[s.owner]]
    return x


def max_disagreement(states) -> float:
    worst = 0.0
    for s in states:
        if not s.hood.neighbors:
            continue
        own = s.y[s.hood.slots[s.owner]]
        diff = own - np.stack([s.copies[j][0] for j in s.hood.neighbors])
        worst = max(worst, float(np.sqrt(np.max(np.einsum("ij,ij->i", diff, diff)))))
    return worst


def local_solve(problem, state: NodeState, t: int, tol: float):
    try:
        rep = solve_local(problem.objectives[state.owner], problem.constraints[state.owner],
                          state.offset(), tol=tol)
    except LocalSolveError as exc:
        raise EngineError(state.owner, t, exc) from exc
    state.y = rep.y
    state.residual = rep.residual
    state.solves += 1
    return rep


@dataclass
class SyncResult:
    trace: list[TraceRecord]
    states: list[NodeState]
    alpha: np.ndarray
    duals: np.ndarray  # Lambda after the last round

    @property
    def x_diag(self):
        return np.concatenate([s.y[s.hood.slots[s.owner]] for s in self.states])


def run_sync(problem, rounds: int, alpha=None, factor: float = 1.0, lam0=None, x_star=None,
             tol: float = DEFAULT_TOL, hooks=(), stop=None) -> SyncResult:
    """Run ``rounds`` synchronous rounds.

    Record ``t`` holds q(Lambda(t)) evaluated at the minimizers computed in
    round t, the disagreement and primal error of those minimizers, and the
    messages sent during the round. ``hooks`` are called as
    ``hook(t, states)`` after each round's dual exchange; ``stop(record)``
    returning true ends the run after that round.
    """
    alpha = step_size_sync(problem, factor) if alpha is None else np.broadcast_to(
        np.asarray(alpha, dtype=float), (problem.n,))
    states = init_states(problem, alpha, lam0)
    x_star = None if x_star is None else np.asarray(x_star, dtype=float)
    trace = []
    for t in range(rounds):
        messages = 0
        q = 0.0
        # phase 1: local minimization and primal broadcast
        for s in states:
            q += local_solve(problem, s, t, tol).value
        for s in states:
            for j in s.hood.neighbors:
                states[j].copies[s.owner] = s.primal_message(j)
                messages += 1
        rec = TraceRecord(
            t=t,
            dual_cost=q,
            primal_err=None if x_star is None else float(np.linalg.norm(diag_primal(problem, states) - x_star)),
            disagreement=max_disagreement(states),
            messages=0,
            solver_residual=max(s.residual for s in states),
        )
        # phase 2: dual ascent and dual broadcast
        for s in states:
            a = s.alpha
            own_i = s.y[s.hood.slots[s.owner]]
            for j in s.hood.neighbors:
                pair = s.duals[j]
                mine_at_j, theirs_at_j = s.copies[j]  # (x_i^(j), x_j^(j))
                pair.own = pair.own + a * (own_i - mine_at_j)
                pair.nbr = pair.nbr + a * (s.y[s.hood.slots[j]] - theirs_at_j)
        for s in states:
            for j in s.hood.neighbors:
                states[j].recv_duals[s.owner] = s.dual_message(j)
                messages += 1
        rec.messages = messages
        trace.append(rec)
        for hook in hooks:
            hook(t, states)
        if stop is not None and stop(rec):
            break
    return SyncResult(trace, states, np.asarray(alpha), collect_duals(problem, states))
