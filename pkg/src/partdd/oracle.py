"""Centralized ground truth for desk-scale instances.

Two independent routes to the optimum of sum_i f_i(gather(x, i)) subject to
every local constraint lifted to R^N:

* active-set enumeration over the general inequality rows (quadratic
  instances with at most ``ENUM_MAX_ROWS`` rows);
* accelerated projected gradient on the aggregated cost, projecting onto the
  intersection of all rows and boxes with Dykstra's method, followed by an
  active-set polish when the objective is quadratic.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import nnls

from .duals import DualLayout, dual_cost
from .local_solver import LocalSolveError, _apg, enumerate_active_sets
from .problem import PolyhedralConstraint

__all__ = [
    "OracleSolution",
    "OracleError",
    "solve_centralized",
    "fd_dual_gradient",
    "aggregate_quadratic",
    "global_constraint",
    "kkt_residual",
    "ENUM_MAX_ROWS",
]

ENUM_MAX_ROWS = 12


class OracleError(RuntimeError):
    pass


@dataclass
class OracleSolution:
    x: np.ndarray
    f: float
    kkt_residual: float
    method: str

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x"] = self.x.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OracleSolution":
        return cls(np.asarray(d["x"], dtype=float), float(d["f"]), float(d["kkt_residual"]), d["method"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "OracleSolution":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _all_quadratic(problem) -> bool:
    return all(getattr(o, "kind", None) == "quadratic" for o in problem.objectives)


def aggregate_quadratic(problem):
    """(Q, r, const) with F(x) = x'Qx + r'x + const for an all-quadratic instance."""
    N = problem.layout.total
    Q = np.zeros((N, N))
    r = np.zeros(N)
    const = 0.0
    part = problem.partition
    for i, obj in enumerate(problem.objectives):
        idx = part.local_index(i)
        Q[np.ix_(idx, idx)] += obj.Q
        r[idx] += obj.r
        const += obj.const
    return 0.5 * (Q + Q.T), r, const


def global_constraint(problem) -> PolyhedralConstraint:
    """All local rows lifted to R^N, intersected with the tightest box."""
    N = problem.layout.total
    part = problem.partition
    lo = np.full(N, -np.inf)
    hi = np.full(N, np.inf)
    rows, rhs = [], []
    for i, con in enumerate(problem.constraints):
        idx = part.local_index(i)
        lo[idx] = np.maximum(lo[idx], con.lower)
        hi[idx] = np.minimum(hi[idx], con.upper)
        for a, b in zip(con.A, con.b):
            row = np.zeros(N)
            row[idx] = a
            rows.append(row)
            rhs.append(b)
    A = np.array(rows) if rows else np.zeros((0, N))
    return PolyhedralConstraint(A, rhs, lo, hi)


class _Aggregate:
    """Sum of local costs as a function of the global vector."""

    def __init__(self, problem):
        self.problem = problem
        self.dim = problem.layout.total
        self.sigma = float(problem.sigmas.min())
        if _all_quadratic(problem):
            self.kind = "quadratic"
            self.Q, self.r, self.const = aggregate_quadratic(problem)
            eig = np.linalg.eigvalsh(self.Q)
            self.sigma = 2.0 * float(eig[0])
            self.smoothness = 2.0 * float(eig[-1])
        else:
            self.kind = "aggregate"
            self.smoothness = None

    def value(self, x):
        if self.kind == "quadratic":
            return float(x @ self.Q @ x + self.r @ x + self.const)
        return self.problem.value(x)

    def gradient(self, x):
        if self.kind == "quadratic":
            return 2.0 * (self.Q @ x) + self.r
        part = self.problem.partition
        g = np.zeros(self.dim)
        for i, obj in enumerate(self.problem.objectives):
            g[part.local_index(i)] += obj.gradient(part.gather(x, i))
        return g

    def in_domain(self, x):
        part = self.problem.partition
        for i, obj in enumerate(self.problem.objectives):
            check = getattr(obj, "in_domain", None)
            if check is not None and not check(part.gather(x, i)):
                return False
        return True


def _stack_rows(con: PolyhedralConstraint):
    eye = np.eye(con.dim)
    return np.vstack([con.A, eye, -eye]), np.concatenate([con.b, con.upper, -con.lower])


def kkt_residual(problem, x, active_tol: float = 1e-7) -> float:
    """Stationarity residual with nonnegative multipliers on near-active rows, plus infeasibility."""
    agg = _Aggregate(problem)
    con = global_constraint(problem)
    G, h = _stack_rows(con)
    grad = agg.gradient(x)
    slack = G @ x - h
    scale = 1.0 + np.abs(h)
    act = slack >= -active_tol * scale
    if act.any():
        _, res = nnls(G[act].T, -grad, maxiter=50 * G.shape[1])
    else:
        res = float(np.linalg.norm(grad))
    return float(res) + max(float(slack.max()), 0.0)


def _polish(agg, con, x, active_tol=1e-7):
    """Solve the equality QP on the rows active at ``x``; keep it only if it is a KKT point."""
    G, h = _stack_rows(con)
    slack = G @ x - h
    act = np.flatnonzero(slack >= -active_tol * (1.0 + np.abs(h)))
    N = agg.dim
    H = 2.0 * agg.Q
    k = act.size
    K = np.zeros((N + k, N + k))
    K[:N, :N] = H
    K[:N, N:] = G[act].T
    K[N:, :N] = G[act]
    rhs = np.concatenate([-agg.r, h[act]])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    xp, mu = sol[:N], sol[N:]
    feas = np.max(G @ xp - h) <= 1e-9 * (1.0 + np.max(np.abs(h)))
    dual_ok = k == 0 or mu.min() >= -1e-9 * (1.0 + np.abs(mu).max())
    if feas and dual_ok and agg.value(xp) <= agg.value(x) + 1e-9 * (1.0 + abs(agg.value(x))):
        return xp
    return None


def solve_centralized(problem, tol: float = 1e-10, method: str = "auto",
                      max_iter: int = 200_000) -> OracleSolution:
    """Optimum of the full partitioned problem.

    ``method`` is ``"auto"`` (enumeration when applicable, otherwise
    projected gradient), ``"enumeration"`` or ``"projected_gradient"``.
    """
    agg = _Aggregate(problem)
    con = global_constraint(problem)
    quad = agg.kind == "quadratic"
    can_enum = quad and con.rows <= ENUM_MAX_ROWS
    if method == "enumeration" and not can_enum:
        raise OracleError("enumeration needs a quadratic instance with few rows")
    if method not in ("auto", "enumeration", "projected_gradient"):
        raise ValueError(f"unknown method {method!r}")
    if method == "enumeration" or (method == "auto" and can_enum):
        try:
            x, _, _ = enumerate_active_sets(agg.Q, agg.r, con.A, con.b)
        except LocalSolveError as exc:
            raise OracleError(str(exc)) from exc
        if np.all(x >= con.lower) and np.all(x <= con.upper):
            return OracleSolution(x, agg.value(x), kkt_residual(problem, x), "enumeration")
        if method == "enumeration":
            raise OracleError("box is active at the optimum; enumeration over rows is not exact")
    start = problem.witness.copy()
    rep = _apg(agg, con, np.zeros(agg.dim), tol, max_iter, start)
    if not rep.ok:
        raise OracleError(f"projected gradient stopped at residual {rep.residual:.3e}")
    x, tag = rep.y, "projected_gradient"
    if quad:
        xp = _polish(agg, con, x)
        if xp is not None:
            x, tag = xp, "projected_gradient+polish"
    return OracleSolution(x, agg.value(x), kkt_residual(problem, x), tag)


def fd_dual_gradient(problem, lam, h: float = 1e-5, tol: float = 1e-12) -> np.ndarray:
    """Central differences of the dual function in every dual coordinate."""
    lam = np.asarray(lam, dtype=float)
    grad = np.zeros_like(lam)
    for k in range(lam.size):
        e = np.zeros_like(lam)
        e[k] = h
        grad[k] = (dual_cost(problem, lam + e, tol) - dual_cost(problem, lam - e, tol)) / (2.0 * h)
    return grad


def dual_size(problem) -> int:
    return DualLayout.of(problem).size
