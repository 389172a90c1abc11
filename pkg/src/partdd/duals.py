"""Dual variables of the copy-coherence constraints and the dual function.

Node ``i`` owns the block Lambda_i = [{lam_i^(i,j)}_j, {lam_j^(i,j)}_j] for
j in N_i ascending: first the multipliers attached to its own block, then the
ones attached to each neighbor's block. The global dual vector stacks the
blocks in node order.

The linear term of node i's subproblem is

    c^(i)[slot i] = sum_j (lam_i^(i,j) - lam_i^(j,i))
    c^(i)[slot j] = lam_j^(i,j) - lam_j^(j,i)

and the partial derivatives of the dual function are differences of local
minimizers:

    dq/d lam_i^(i,j) = x_i^(i) - x_i^(j),   dq/d lam_j^(i,j) = x_j^(i) - x_j^(j).
"""

from __future__ import annotations

import numpy as np

from .local_solver import DEFAULT_TOL, SolveReport, solve_local

__all__ = [
    "DualLayout",
    "assemble_offset",
    "lipschitz_constants",
    "solve_all",
    "dual_cost",
    "dual_gradient",
]


class DualLayout:
    def __init__(self, partition):
        self.partition = partition
        sizes = partition.layout.sizes
        self._self: dict[tuple[int, int], slice] = {}
        self._nbr: dict[tuple[int, int], slice] = {}
        blocks = []
        pos = 0
        for i in range(partition.n):
            start = pos
            nbrs = partition.graph.neighbors[i]
            for j in nbrs:
                self._self[i, j] = slice(pos, pos + sizes[i])
                pos += sizes[i]
            for j in nbrs:
                self._nbr[i, j] = slice(pos, pos + sizes[j])
                pos += sizes[j]
            blocks.append(slice(start, pos))
        self.blocks = tuple(blocks)
        self.size = pos

    @classmethod
    def of(cls, problem) -> "DualLayout":
        layout = getattr(problem, "_dual_layout", None)
        if layout is None:
            layout = cls(problem.partition)
            problem._dual_layout = layout
        return layout

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def block(self, i: int) -> slice:
        return self.blocks[i]

    def self_part(self, i: int, j: int) -> slice:
        """Slice of lam_i^(i,j): node i's multiplier on its own block, edge to j."""
        return self._self[i, j]

    def nbr_part(self, i: int, j: int) -> slice:
        """Slice of lam_j^(i,j): node i's multiplier on neighbor j's block."""
        return self._nbr[i, j]

    def offset(self, i: int, lam) -> np.ndarray:
        nbrs = self.partition.graph.neighbors[i]
        return assemble_offset(
            self.partition.hoods[i],
            [lam[self._self[i, j]] for j in nbrs],
            [lam[self._nbr[i, j]] for j in nbrs],
            [lam[self._self[j, i]] for j in nbrs],
            [lam[self._nbr[j, i]] for j in nbrs],
        )


def assemble_offset(hood, own_self, own_nbr, recv_self, recv_nbr) -> np.ndarray:
    """Linear term of node ``hood.owner`` from its own and its neighbors' duals.

    Lists are indexed like ``hood.neighbors``: ``own_self[k] = lam_i^(i,j)``,
    ``own_nbr[k] = lam_j^(i,j)``, ``recv_self[k] = lam_j^(j,i)``,
    ``recv_nbr[k] = lam_i^(j,i)`` for ``j = hood.neighbors[k]``.

    Engines and the centralized dual evaluation all go through this function,
    so equal inputs give bit-identical offsets.
    """
    c = np.zeros(hood.dim)
    own = hood.slots[hood.owner]
    for k, j in enumerate(hood.neighbors):
        c[own] += own_self[k] - recv_nbr[k]
        c[hood.slots[j]] = own_nbr[k] - recv_self[k]
    return c


def lipschitz_constants(problem) -> np.ndarray:
    """Block Lipschitz constants L_i = sqrt(2 sum_j (1/sigma_i + 1/sigma_j)^2)."""
    s = problem.sigmas
    out = np.zeros(problem.n)
    for i in range(problem.n):
        out[i] = np.sqrt(2.0 * sum((1.0 / s[i] + 1.0 / s[j]) ** 2 for j in problem.graph.neighbors[i]))
    return out


def solve_all(problem, lam, tol: float = DEFAULT_TOL, nodes=None) -> dict[int, SolveReport]:
    layout = DualLayout.of(problem)
    nodes = range(problem.n) if nodes is None else nodes
    return {
        i: solve_local(problem.objectives[i], problem.constraints[i], layout.offset(i, lam), tol=tol)
        for i in nodes
    }


def dual_cost(problem, lam, tol: float = DEFAULT_TOL, reports=None) -> float:
    """q(lam) = sum_i min_{y in X_i} f_i(y) + c^(i)'y."""
    if reports is None:
        reports = solve_all(problem, lam, tol)
    return float(sum(reports[i].value for i in range(problem.n)))


def gradient_from_minimizers(problem, ys) -> np.ndarray:
    layout = DualLayout.of(problem)
    part = problem.partition
    grad = layout.zeros()
    for i in range(problem.n):
        for j in problem.graph.neighbors[i]:
            grad[layout.self_part(i, j)] = ys[i][part.slot_of(i, i)] - ys[j][part.slot_of(j, i)]
            grad[layout.nbr_part(i, j)] = ys[i][part.slot_of(i, j)] - ys[j][part.slot_of(j, j)]
    return grad


def dual_gradient(problem, lam, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Gradient of q at ``lam`` from fresh local minimizers."""
    reports = solve_all(problem, lam, tol)
    return gradient_from_minimizers(problem, {i: r.y for i, r in reports.items()})
