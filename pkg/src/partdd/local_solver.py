"""Per-node subproblem  min_{y in X} f(y) + c'y.

Three routes:

* ``active_set`` -- Goldfarb-Idnani dual active-set method for quadratic objectives
  over polyhedra. Exact up to round-off; this is what the engines use on
  quadratic instances because it costs a handful of small linear solves.
* ``newton`` -- projected Newton (sequential QP) for smooth objectives with a
  diagonal Hessian, such as the utility objectives.
* ``apg`` -- accelerated projected gradient with function-value restart,
  for any objective exposing ``value``/``gradient`` and any constraint with a
  Euclidean projection.

``enumerate_active_sets`` is the brute-force reference for small row counts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "SolveReport",
    "LocalSolveError",
    "InfeasibleConstraintError",
    "ProjectionError",
    "solve_local",
    "project_polyhedron",
    "fixed_point_residual",
    "enumerate_active_sets",
    "DEFAULT_TOL",
    "DEFAULT_MAX_ITER",
]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000


class LocalSolveError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InfeasibleConstraintError(LocalSolveError):
    pass


class ProjectionError(RuntimeError):
    pass


@dataclass
class SolveReport:
    y: np.ndarray
    value: float  # f(y) + c'y
    iterations: int
    residual: float
    status: str
    method: str

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


# --------------------------------------------------------------------------
# projection

# above this dimension the dense active-set projection loses to Dykstra
EXACT_PROJECTION_MAX_DIM = 64


def project_polyhedron(point, constraint, tol: float = 1e-12, max_iter: int = 1_000_000):
    """Euclidean projection onto {A y <= b, lower <= y <= upper}.

    Small sets are projected exactly with the dual active-set QP method
    (identity Hessian). Larger ones, or the rare case where that fails, use
    Dykstra's method: the box and every half-space are visited in turn, each
    with its own correction term, until a full sweep moves the iterate by at
    most ``tol`` (scaled by the point's magnitude) and the iterate is
    feasible to the same tolerance.
    """
    x = np.array(point, dtype=float)
    lo, hi = constraint.lower, constraint.upper
    if constraint.rows == 0:
        return np.clip(x, lo, hi)
    A, b = constraint.A, constraint.b
    scale = tol * (1.0 + float(np.max(np.abs(x))))
    # cheap exits: already inside, or one clip lands inside
    if np.all(x >= lo) and np.all(x <= hi) and np.all(A @ x <= b):
        return x
    if constraint.dim <= EXACT_PROJECTION_MAX_DIM:
        G, h, GGT = _projection_data(constraint)
        y, _, _, _ = _goldfarb_idnani(None, G.T, GGT, G, h, -x, 50 * G.shape[0])
        if y is not None:
            return y
    return _dykstra(x, constraint, scale, max_iter)


def _projection_data(constraint):
    cache = getattr(constraint, "_proj_cache", None)
    if cache is None:
        G, h = _stack(constraint)
        cache = (G, h, G @ G.T)
        constraint._proj_cache = cache
    return cache


def _dykstra(x, constraint, scale, max_iter):
    lo, hi = constraint.lower, constraint.upper
    A, b = constraint.A, constraint.b
    norms2 = np.einsum("ij,ij->i", A, A)
    p_box = np.zeros_like(x)
    p_rows = np.zeros_like(A)
    last_change = np.inf
    stalled = 0
    for _ in range(max_iter):
        x_old = x
        v = x + p_box
        x = np.clip(v, lo, hi)
        p_box = v - x
        for k in range(A.shape[0]):
            v = x + p_rows[k]
            s = A[k] @ v - b[k]
            x = v - (s / norms2[k]) * A[k] if s > 0 else v
            p_rows[k] = v - x
        change = float(np.max(np.abs(x - x_old)))
        if change <= scale:
            viol = max(float(np.max(A @ x - b)), float(np.max(lo - x)), float(np.max(x - hi)))
            if viol <= scale:
                return x
        # a sweep that does not shrink the step for many rounds is stagnating
        if change >= last_change:
            stalled += 1
            if stalled > 10_000:
                break
        else:
            stalled = 0
        last_change = change
    raise ProjectionError(f"Dykstra projection did not converge (last change {change:.3e})")


def fixed_point_residual(objective, constraint, c, y, proj_tol: float = 1e-14) -> float:
    """||y - Proj_X(y - grad(f + c'.)(y))||, zero exactly at the minimizer."""
    g = objective.gradient(y) + c
    return float(np.linalg.norm(y - project_polyhedron(y - g, constraint, tol=proj_tol)))


# --------------------------------------------------------------------------
# dual active-set QP for quadratic objectives

def _stack(constraint):
    eye = np.eye(constraint.dim)
    return (np.vstack([constraint.A, eye, -eye]),
            np.concatenate([constraint.b, constraint.upper, -constraint.lower]))


class _QPData:
    """Cached factorization for min 0.5 y'Hy + g'y s.t. G y <= h with H = 2Q."""

    def __init__(self, objective, constraint):
        d = objective.dim
        H = 2.0 * objective.Q
        self.chol = cho_factor(H)
        self.G, self.h = _stack(constraint)
        self.HinvGT = cho_solve(self.chol, self.G.T)  # d x rows
        self.GHG = self.G @ self.HinvGT
        self.Hinv = cho_solve(self.chol, np.eye(d))
        self.constraint = constraint


def _qp_data(objective, constraint) -> _QPData:
    cache = getattr(objective, "_qp_cache", None)
    if cache is None or cache.constraint is not constraint:
        cache = _QPData(objective, constraint)
        objective._qp_cache = cache
    return cache


def _goldfarb_idnani(Hinv, HG, GHG, G, h, g, max_iter: int):
    """Goldfarb-Idnani dual active-set method for min 0.5 y'Hy + g'y s.t. G y <= h.

    Starts from the unconstrained minimizer and adds the most violated row
    each outer step. A row that is linearly dependent on the active ones
    produces a zero primal direction; the method then takes a pure dual
    step and drops the blocking row, so degenerate vertices need no special
    casing. ``HG = H^-1 G'`` and ``GHG = G H^-1 G'``; ``Hinv=None`` means H = I.

    Returns ``(y, active_rows, multipliers, iterations)``; ``y`` is None on
    failure (iteration cap or inconsistent rows).
    """
    y = -g if Hinv is None else -(Hinv @ g)
    feas_tol = 1e-12 * (1.0 + float(np.max(np.abs(h))))
    A: list[int] = []
    u = np.zeros(0)
    it = 0
    while it < max_iter:
        viol = G @ y - h
        p = int(np.argmax(viol))
        if viol[p] <= feas_tol:
            return y, A, u, it
        up = 0.0  # multiplier of the row being added
        while True:
            it += 1
            if it > max_iter:
                return None, A, u, it
            if A:
                try:
                    r = np.linalg.solve(GHG[np.ix_(A, A)], GHG[A, p])
                except np.linalg.LinAlgError:
                    return None, A, u, it
                z = HG[:, A] @ r - HG[:, p]
                curv = GHG[p, p] - GHG[p, A] @ r
            else:
                r = np.zeros(0)
                z = -HG[:, p]
                curv = GHG[p, p]
            dependent = curv <= 1e-13 * GHG[p, p]
            t1, drop = np.inf, -1
            for k in np.flatnonzero(r > 0):
                if u[k] / r[k] < t1:
                    t1, drop = u[k] / r[k], int(k)
            slack = float(G[p] @ y - h[p])
            t2 = np.inf if dependent else slack / curv
            t = min(t1, t2)
            if not np.isfinite(t):
                return None, A, u, it
            if not dependent:
                y = y + t * z
            u = u - t * r
            up += t
            if t2 <= t1:
                A.append(p)
                u = np.append(u, up)
                break
            del A[drop]
            u = np.delete(u, drop)
    return None, A, u, it


def _kkt(grad, G, h, y, A, u) -> float:
    stat = grad + G[A].T @ u if A else grad
    res = float(np.linalg.norm(stat)) + max(float(np.max(G @ y - h)), 0.0)
    if A:
        res += max(-float(u.min()), 0.0)
    return res


def _active_set(objective, constraint, c, max_iter: int):
    """Exact QP solve; returns ``((y, kkt_residual), iterations)`` or ``(None, its)``."""
    data = _qp_data(objective, constraint)
    g = objective.r + c
    y, A, u, it = _goldfarb_idnani(data.Hinv, data.HinvGT, data.GHG, data.G, data.h, g, max_iter)
    if y is None:
        return None, it
    return (y, _kkt(2.0 * (objective.Q @ y) + g, data.G, data.h, y, A, u)), it


# --------------------------------------------------------------------------
# projected Newton for smooth objectives with a diagonal Hessian

def _newton(objective, constraint, c, tol, max_iter):
    """Sequential QP: minimize the local quadratic model exactly, then backtrack.

    The model minimizer is always feasible, so every iterate after the first
    is a convex combination of feasible points. Stops when the model step is
    below ``tol``; the residual is the KKT residual of the true gradient with
    the model's multipliers.
    """
    G, h = _stack(constraint)
    F = lambda v: objective.value(v) + c @ v
    y = 0.5 * (constraint.lower + constraint.upper)
    Fy = np.inf
    res = np.inf
    for it in range(1, max_iter + 1):
        hd = objective.hessian_diag(y)
        Hinv = 1.0 / hd
        HG = G.T * Hinv[:, None]
        grad = objective.gradient(y) + c
        y_hat, A, u, _ = _goldfarb_idnani(np.diag(Hinv), HG, G @ HG, G, h, grad - hd * y,
                                          10 * G.shape[0] + 50)
        if y_hat is None:
            raise LocalSolveError("Newton model QP failed")
        if not np.isfinite(Fy):  # first model step from a possibly infeasible center
            y, Fy = y_hat, F(y_hat)
            if not np.isfinite(Fy):
                return SolveReport(y, Fy, it, res, "outside_domain", "newton")
            continue
        step = y_hat - y
        res = _kkt(objective.gradient(y_hat) + c, G, h, y_hat, A, u)
        if float(np.max(np.abs(step))) <= tol or res <= tol:
            return SolveReport(y_hat, F(y_hat), it, res, "optimal", "newton")
        slope = float(grad @ step)
        t = 1.0
        while True:
            cand = y + t * step
            Fc = F(cand)
            if Fc <= Fy + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        y, Fy = cand, Fc
    return SolveReport(y, Fy, max_iter, res, "max_iter", "newton")


# --------------------------------------------------------------------------
# accelerated projected gradient

def _apg(objective, constraint, c, tol, max_iter, y0, callback=None):
    proj = constraint.project
    F = lambda v: objective.value(v) + c @ v
    gradF = lambda v: objective.gradient(v) + c
    y = proj(np.zeros(objective.dim) if y0 is None else np.asarray(y0, dtype=float))
    Fy = F(y)
    L = objective.smoothness
    backtrack = L is None
    if backtrack:
        L = max(1.0, 2.0 * objective.sigma)
    sigma = objective.sigma
    y_prev = y.copy()
    momentum = True
    res = np.inf
    for it in range(1, max_iter + 1):
        beta = (np.sqrt(L) - np.sqrt(sigma)) / (np.sqrt(L) + np.sqrt(sigma)) if momentum else 0.0
        z = y + beta * (y - y_prev)
        if not _in_domain(objective, z):
            z = y
        gz = gradF(z)
        Fz = F(z)
        while True:
            y_new = proj(z - gz / L)
            step = y_new - z
            if not backtrack or F(y_new) <= Fz + gz @ step + 0.5 * L * (step @ step) + 1e-12 * abs(Fz):
                break
            L *= 2.0
        F_new = F(y_new)
        if F_new > Fy and momentum:
            # function-value restart: redo the step from y without momentum
            momentum = False
            y_prev = y.copy()
            continue
        momentum = True
        y_prev, y, Fy = y, y_new, F_new
        if callback is not None:
            callback(it, y, Fy)
        if it % 10 == 0 or float(np.max(np.abs(step))) <= tol:
            res = fixed_point_residual(objective, constraint, c, y)
            if res <= tol:
                return SolveReport(y, Fy, it, res, "optimal", "apg")
    return SolveReport(y, Fy, max_iter, res, "max_iter", "apg")


def _in_domain(objective, z) -> bool:
    check = getattr(objective, "in_domain", None)
    return True if check is None else bool(check(z))


# --------------------------------------------------------------------------

def solve_local(objective, constraint, c=None, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER, y0=None, method: str = "auto",
                callback=None) -> SolveReport:
    """Minimize f(y) + c'y over the node's constraint set.

    ``method`` is ``"auto"`` (active set for quadratics, projected Newton
    for objectives with a diagonal Hessian, APG otherwise), ``"active_set"``,
    ``"newton"`` or ``"apg"``. ``callback(it, y, value)`` sees every
    accepted APG iterate. On the active-set route the reported
    residual is the KKT residual; on the APG route it is the fixed-point
    residual ``||y - Proj(y - grad)||``.

    Raises
    ------
    InfeasibleConstraintError
        The constraint set is empty.
    LocalSolveError
        The iteration cap was hit; the partial report is attached.
    """
    c = np.zeros(objective.dim) if c is None else np.asarray(c, dtype=float)
    if not constraint.is_nonempty():
        raise InfeasibleConstraintError("local constraint set is empty")
    quadratic = getattr(objective, "kind", None) == "quadratic"
    if method in ("auto", "active_set") and quadratic:
        out, its = _active_set(objective, constraint, c, max_iter=min(max_iter, 10 * (constraint.rows + 2 * objective.dim) + 50))
        if out is not None:
            y, res = out
            return SolveReport(y, objective.value(y) + float(c @ y), its, res, "optimal", "active_set")
        if method == "active_set":
            raise LocalSolveError("active-set iteration failed (iteration cap or inconsistent rows)")
    elif method == "active_set":
        raise ValueError("active_set route needs a quadratic objective")
    elif method not in ("auto", "apg", "newton"):
        raise ValueError(f"unknown method {method!r}")
    newton_ok = hasattr(objective, "hessian_diag")
    if method == "newton" and not newton_ok:
        raise ValueError("newton route needs an objective with hessian_diag")
    if method == "newton" or (method == "auto" and newton_ok and not quadratic):
        report = _newton(objective, constraint, c, tol, min(max_iter, 200))
        if report.ok or method == "newton":
            if not report.ok:
                raise LocalSolveError(f"Newton stopped at residual {report.residual:.3e}", report)
            return report
    report = _apg(objective, constraint, c, tol, max_iter, y0, callback)
    if not report.ok:
        raise LocalSolveError(f"APG stopped at residual {report.residual:.3e} after {max_iter} iterations", report)
    return report


def enumerate_active_sets(Q, g, A, b, tol: float = 1e-9):
    """Brute-force minimizer of y'Qy + g'y subject to A y <= b.

    Tries every subset of rows as the active set (smallest subsets first),
    solves the equality-constrained KKT system and returns the first point
    that is primal feasible with nonnegative multipliers. For a strictly
    convex objective that point is the unique minimizer.

    Returns ``(y, multipliers, active_rows)``.
    """
    Q = np.asarray(Q, dtype=float)
    g = np.asarray(g, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, Q.shape[0])
    b = np.asarray(b, dtype=float)
    d, k = Q.shape[0], A.shape[0]
    H = 2.0 * Q
    scale = 1.0 + float(np.max(np.abs(b))) if k else 1.0
    for size in range(0, min(k, d) + 1):
        for rows in itertools.combinations(range(k), size):
            rows = list(rows)
            K = np.zeros((d + size, d + size))
            K[:d, :d] = H
            K[:d, d:] = A[rows].T
            K[d:, :d] = A[rows]
            rhs = np.concatenate([-g, b[rows]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.linalg.cond(K) > 1e13:
                continue
            y, mu = sol[:d], sol[d:]
            if size and np.min(mu) < -tol * (1.0 + float(np.max(np.abs(mu)))):
                continue
            if k and np.max(A @ y - b) > tol * scale:
                continue
            full = np.zeros(k)
            full[rows] = mu
            return y, full, tuple(rows)
    raise LocalSolveError("no KKT point found among active sets")
