"""Partitioned problem data: local objectives, local constraints, instances.

Every objective and constraint of node ``i`` acts on the node's local vector
(own block first, then neighbor blocks ascending). Minimization is the
canonical direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blockspace import BlockLayout, Partition
from .graph import Graph

__all__ = [
    "QuadraticObjective",
    "UtilityObjective",
    "PolyhedralConstraint",
    "PartitionedProblem",
    "ProblemError",
    "objective_from_dict",
]


class ProblemError(ValueError):
    """Instance violates a standing assumption (strong convexity, compactness, Slater)."""


class QuadraticObjective:
    """f(y) = y'Qy + r'y + const with Q symmetric positive definite."""

    kind = "quadratic"

    def __init__(self, Q, r, const: float = 0.0, sigma: float | None = None):
        Q = np.array(Q, dtype=float)
        r = np.array(r, dtype=float)
        d = r.shape[0]
        if Q.shape != (d, d):
            raise ProblemError(f"Q has shape {Q.shape}, expected {(d, d)}")
        if not np.array_equal(Q, Q.T):
            Q = 0.5 * (Q + Q.T)
        eig = np.linalg.eigvalsh(Q)
        if eig[0] <= 0.0:
            raise ProblemError(f"Q is not positive definite (min eigenvalue {eig[0]:.3e})")
        self.Q, self.r, self.const = Q, r, float(const)
        self.dim = d
        self.sigma = float(sigma) if sigma is not None else 2.0 * float(eig[0])
        self.smoothness = 2.0 * float(eig[-1])
        if self.sigma <= 0 or self.sigma > 2.0 * eig[0] * (1 + 1e-12):
            raise ProblemError(f"sigma={self.sigma} is not a valid modulus for this Q")

    def value(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return float(y @ self.Q @ y + self.r @ y + self.const)

    def gradient(self, y) -> np.ndarray:
        return 2.0 * (self.Q @ y) + self.r

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "Q": self.Q.tolist(),
            "r": self.r.tolist(),
            "const": self.const,
            "sigma": self.sigma,
        }


class UtilityObjective:
    """Negated concave utility on the own slot plus a separable quadratic regularizer.

    f(y) = -U(y[0]) + sum_k reg[k] * y[k]**2, with

    * ``utility="log"``: U(x) = weight * log(x + shift), defined for x > -shift;
    * ``utility="quadratic"``: U(x) = weight * x - 0.5 * curvature * x**2.

    For the log utility the strong-concavity modulus is taken on ``x <= upper``,
    so ``upper`` must bound the own rate (the rate box does).
    """

    kind = "utility"

    def __init__(self, reg, utility: str = "log", weight: float = 1.0, shift: float = 1.0,
                 curvature: float = 0.0, upper: float | None = None):
        self.reg = np.array(reg, dtype=float)
        self.dim = self.reg.shape[0]
        if np.any(self.reg < 0) or (self.dim > 1 and np.any(self.reg[1:] <= 0)):
            raise ProblemError("regularization weights on neighbor slots must be positive")
        if utility not in ("log", "quadratic"):
            raise ProblemError(f"unknown utility {utility!r}")
        if weight <= 0:
            raise ProblemError("utility weight must be positive")
        self.utility, self.weight, self.shift = utility, float(weight), float(shift)
        self.curvature = float(curvature)
        self.upper = None if upper is None else float(upper)
        if utility == "log":
            if self.upper is None:
                raise ProblemError("log utility needs an upper bound on the own rate")
            own = self.weight / (self.upper + self.shift) ** 2
        else:
            if self.curvature < 0:
                raise ProblemError("quadratic utility needs nonnegative curvature")
            own = self.curvature
        mods = [own + 2.0 * self.reg[0]]
        if self.dim > 1:
            mods.append(2.0 * float(self.reg[1:].min()))
        self.sigma = float(min(mods))
        if self.sigma <= 0:
            raise ProblemError("utility objective is not strongly convex")
        self.smoothness = None

    def in_domain(self, y) -> bool:
        return self.utility != "log" or y[0] > -self.shift

    def _u(self, x):
        if self.utility == "log":
            if x <= -self.shift:
                return -np.inf
            return self.weight * np.log(x + self.shift)
        return self.weight * x - 0.5 * self.curvature * x * x

    def _du(self, x):
        if self.utility == "log":
            return self.weight / (x + self.shift)
        return self.weight - self.curvature * x

    def value(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return float(-self._u(y[0]) + self.reg @ (y * y))

    def gradient(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        g = 2.0 * self.reg * y
        g[0] -= self._du(y[0])
        return g

    def hessian_diag(self, y) -> np.ndarray:
        hd = 2.0 * self.reg.copy()
        x = float(y[0])
        if self.utility == "log":
            hd[0] += self.weight / (x + self.shift) ** 2
        else:
            hd[0] += self.curvature
        # the own slot may have zero curvature far above the rate bound; keep the model bounded
        hd[0] = max(hd[0], self.sigma)
        return hd

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "reg": self.reg.tolist(),
            "utility": self.utility,
            "weight": self.weight,
            "shift": self.shift,
            "curvature": self.curvature,
            "upper": self.upper,
            "sigma": self.sigma,
        }


def objective_from_dict(d: dict):
    if d["kind"] == "quadratic":
        return QuadraticObjective(d["Q"], d["r"], d.get("const", 0.0), sigma=d.get("sigma"))
    if d["kind"] == "utility":
        obj = UtilityObjective(d["reg"], d["utility"], d["weight"], d["shift"],
                               d["curvature"], d["upper"])
        if "sigma" in d and d["sigma"] != obj.sigma:
            raise ProblemError("stored sigma does not match the utility parameters")
        return obj
    raise ProblemError(f"unknown objective kind {d['kind']!r}")


class PolyhedralConstraint:
    """{y : A y <= b, lower <= y <= upper}; the box is always finite."""

    def __init__(self, A, b, lower, upper):
        lower = np.array(lower, dtype=float)
        upper = np.array(upper, dtype=float)
        d = lower.shape[0]
        A = np.array(A, dtype=float).reshape(-1, d)
        b = np.array(b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise ProblemError("A and b disagree on the number of rows")
        if upper.shape != (d,) or not np.all(np.isfinite(lower)) or not np.all(np.isfinite(upper)):
            raise ProblemError("box bounds must be finite vectors of equal length")
        if np.any(lower > upper):
            raise ProblemError("box has lower > upper")
        self.A, self.b, self.lower, self.upper = A, b, lower, upper
        self.dim = d
        self._nonempty: bool | None = None

    @property
    def rows(self) -> int:
        return self.A.shape[0]

    def violation(self, y) -> float:
        """Largest constraint violation (<= 0 means feasible)."""
        y = np.asarray(y, dtype=float)
        v = max(float(np.max(self.lower - y)), float(np.max(y - self.upper)))
        if self.rows:
            v = max(v, float(np.max(self.A @ y - self.b)))
        return v

    def contains(self, y, tol: float = 1e-10) -> bool:
        return self.violation(y) <= tol

    def strictly_contains(self, y) -> bool:
        y = np.asarray(y, dtype=float)
        ok = bool(np.all(y > self.lower) and np.all(y < self.upper))
        return ok and (self.rows == 0 or bool(np.all(self.A @ y < self.b)))

    def is_nonempty(self) -> bool:
        if self._nonempty is None:
            if self.rows == 0:
                self._nonempty = True
            else:
                from scipy.optimize import linprog

                res = linprog(np.zeros(self.dim), A_ub=self.A, b_ub=self.b,
                              bounds=list(zip(self.lower, self.upper)), method="highs")
                self._nonempty = res.status == 0
        return self._nonempty

    def project(self, y, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
        from .local_solver import project_polyhedron

        return project_polyhedron(y, self, tol=tol, max_iter=max_iter)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolyhedralConstraint":
        lower = d["lower"]
        A = d["A"] if d["A"] else np.zeros((0, len(lower)))
        return cls(A, d["b"], lower, d["upper"])


@dataclass
class PartitionedProblem:
    graph: Graph
    layout: BlockLayout
    objectives: list
    constraints: list
    witness: np.ndarray
    scenario: str = "custom"
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.partition = Partition(self.graph, self.layout)
        self.witness = np.asarray(self.witness, dtype=float)
        n = self.graph.n
        if len(self.objectives) != n or len(self.constraints) != n:
            raise ProblemError("need exactly one objective and one constraint per node")
        for i in range(n):
            d = self.partition.dim(i)
            if self.objectives[i].dim != d or self.constraints[i].dim != d:
                raise ProblemError(f"node {i}: objective/constraint dimension differs from {d}")
        if self.witness.shape != (self.layout.total,):
            raise ProblemError("witness has the wrong length")
        for i in range(n):
            if not self.constraints[i].strictly_contains(self.partition.gather(self.witness, i)):
                raise ProblemError(f"witness is not strictly feasible for node {i}")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([obj.sigma for obj in self.objectives])

    def local_value(self, i: int, y) -> float:
        return self.objectives[i].value(y)

    def value(self, x) -> float:
        """Global cost sum_i f_i(gather(x, i))."""
        return float(sum(self.objectives[i].value(self.partition.gather(x, i)) for i in range(self.n)))

    def max_violation(self, x) -> float:
        return max(self.constraints[i].violation(self.partition.gather(x, i)) for i in range(self.n))

    def offset(self, i: int, lam) -> np.ndarray:
        """Linear term c^(i) of node i's subproblem for the stacked duals ``lam``."""
        from .duals import DualLayout

        return DualLayout.of(self).offset(i, lam)
