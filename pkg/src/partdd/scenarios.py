"""Instance generators: random partitioned QP, NUM, resource allocation, WLS.

Maximization scenarios are negated at generation time. Strong convexity on
neighbor slots comes from a separable regularizer epsilon * sum_j x_j**2
whose weight on block j is split evenly across the |N_j| + 1 nodes that hold
a copy of x_j, so summing the local costs gives back exactly the regularized
global problem.
"""

from __future__ import annotations

import numpy as np

from .blockspace import BlockLayout, Partition
from .graph import Graph, GraphError
from .problem import (
    PartitionedProblem,
    PolyhedralConstraint,
    ProblemError,
    QuadraticObjective,
    UtilityObjective,
)

__all__ = [
    "generate_random_qp",
    "generate_num",
    "generate_resource_allocation",
    "generate_wls",
    "random_wls",
    "five_source_links",
    "unconstrained_rates",
]


def _random_spd(rng, d, eig_range):
    eig = rng.uniform(eig_range[0], eig_range[1], size=d)
    U, R = np.linalg.qr(rng.standard_normal((d, d)))
    U = U * np.sign(np.diag(R))
    Q = (U * eig) @ U.T
    return 0.5 * (Q + Q.T)


def generate_random_qp(graph: Graph, seed: int, m_range=(1, 4), eig_range=(1.0, 20.0),
                       r_range=(0.0, 100.0), rows_range=(1, 2), sizes=None,
                       slack_range=(1.0, 10.0)) -> PartitionedProblem:
    """Random partitioned QP with polyhedral local constraints.

    Block sizes are uniform on ``m_range`` (inclusive) unless ``sizes`` is
    given; each Q_i has its eigenvalues uniform on ``eig_range``; r_i entries
    are uniform on ``r_range``; A_i has a uniform number of rows in
    ``rows_range`` with standard normal entries. A random point w is drawn
    first and b_i = A_i w + slack, so w is a strict-feasibility witness.

    The box |y| <= R is added for compactness. From f(x*) <= f(w) and
    f(x) >= mu ||x||^2 - ||r|| ||x|| (mu = smallest eigenvalue), the optimum
    satisfies ||x*|| <= s; R = 10 * max(s, ||w||_inf + 1) keeps the box
    inactive at the optimum.
    """
    rng = np.random.default_rng(seed)
    n = graph.n
    if sizes is None:
        sizes = rng.integers(m_range[0], m_range[1] + 1, size=n)
    layout = BlockLayout(tuple(int(m) for m in sizes))
    part = Partition(graph, layout)
    w = rng.standard_normal(layout.total)
    Qs, rs, As, bs = [], [], [], []
    for i in range(n):
        d = part.dim(i)
        Qs.append(_random_spd(rng, d, eig_range))
        rs.append(rng.uniform(r_range[0], r_range[1], size=d))
        k = int(rng.integers(rows_range[0], rows_range[1] + 1))
        A = rng.standard_normal((k, d))
        As.append(A)
        bs.append(A @ part.gather(w, i) + rng.uniform(slack_range[0], slack_range[1], size=k))
    objectives = [QuadraticObjective(Q, r) for Q, r in zip(Qs, rs)]
    f_w = sum(obj.value(part.gather(w, i)) for i, obj in enumerate(objectives))
    mu = min(obj.sigma for obj in objectives) / 2.0
    R = float(np.sqrt(sum(r @ r for r in rs)))
    s = (R + np.sqrt(R * R + 4.0 * mu * max(f_w, -R * R / (4.0 * mu)))) / (2.0 * mu)
    radius = 10.0 * max(s, float(np.max(np.abs(w))) + 1.0)
    constraints = [
        PolyhedralConstraint(A, b, -radius * np.ones(part.dim(i)), radius * np.ones(part.dim(i)))
        for i, (A, b) in enumerate(zip(As, bs))
    ]
    return PartitionedProblem(graph, layout, objectives, constraints, w, scenario="qp", seed=seed,
                              meta={"box_radius": radius, "eig_range": list(eig_range),
                                    "r_range": list(r_range), "rows_range": list(rows_range)})


def _copy_counts(graph: Graph) -> np.ndarray:
    return np.array([graph.degree(j) + 1 for j in range(graph.n)], dtype=float)


def five_source_links() -> list[list[int]]:
    """Five sources sharing three links.

    Link 0 carries sources 0, 1, 2; link 1 carries 2, 3; link 2 carries 3, 4.
    """
    return [[0, 1, 2], [2, 3], [3, 4]]


def unconstrained_rates(utility, weights, curvature, shift, eps, upper):
    """Per-source maximizer of U_j(x) - eps x^2 ignoring every constraint but the upper rate bound."""
    out = []
    for j in range(len(weights)):
        if utility == "quadratic":
            x = weights[j] / (curvature[j] + 2.0 * eps)
        else:
            # w / (x + shift) = 2 eps x
            if eps > 0:
                x = (-shift + np.sqrt(shift * shift + 2.0 * weights[j] / eps)) / 2.0
            else:
                x = np.inf
        out.append(min(x, upper[j]))
    return np.array(out)


def _utility_nodes(graph, rows_for, rate_boxes, weights, eps, utility, curvature, shift):
    n = graph.n
    part = Partition(graph, BlockLayout((1,) * n))
    counts = _copy_counts(graph)
    objectives, constraints = [], []
    for i in range(n):
        members = part.hoods[i].members
        reg = np.array([eps / counts[j] for j in members])
        objectives.append(UtilityObjective(reg, utility=utility, weight=weights[i], shift=shift,
                                           curvature=curvature[i], upper=rate_boxes[i][1]))
        A, b = rows_for(i, members)
        constraints.append(PolyhedralConstraint(
            A, b, [rate_boxes[j][0] for j in members], [rate_boxes[j][1] for j in members]))
    return part, objectives, constraints


def generate_num(n_sources: int, link_users, capacities, rate_boxes, utility_weights, eps: float,
                 utility: str = "log", curvature=None, shift: float = 1.0) -> PartitionedProblem:
    """Network utility maximization over sources sharing links.

    ``link_users[l]`` lists the sources using link ``l``. Sources sharing a
    link become neighbors. Node i keeps the rate boxes of its closed
    neighborhood and the capacity rows of every link it uses.

    Raises
    ------
    ProblemError
        A link has no users, a box is invalid, or a capacity leaves no strictly
        feasible rate vector.
    GraphError
        The induced communication graph is disconnected.
    """
    n = int(n_sources)
    eps = float(eps)
    if eps <= 0:
        raise ProblemError("NUM needs a positive regularization eps")
    link_users = [sorted(set(int(s) for s in users)) for users in link_users]
    capacities = np.asarray(capacities, dtype=float)
    if len(capacities) != len(link_users):
        raise ProblemError("one capacity per link")
    if any(not users for users in link_users):
        raise ProblemError("every link must be used by at least one source")
    lo = np.array([b[0] for b in rate_boxes], dtype=float)
    hi = np.array([b[1] for b in rate_boxes], dtype=float)
    if len(lo) != n or np.any(lo < 0) or np.any(lo >= hi):
        raise ProblemError("rate boxes must satisfy 0 <= kappa < K")
    links_of = [[l for l, users in enumerate(link_users) if i in users] for i in range(n)]
    edges = {(a, b) for users in link_users for a in users for b in users if a < b}
    graph = Graph(n, tuple(sorted(edges)))
    curvature = np.zeros(n) if curvature is None else np.broadcast_to(np.asarray(curvature, float), (n,))

    def rows_for(i, members):
        pos = {j: k for k, j in enumerate(members)}
        A = np.zeros((len(links_of[i]), len(members)))
        for r, l in enumerate(links_of[i]):
            for j in link_users[l]:
                A[r, pos[j]] = 1.0
        return A, capacities[links_of[i]]

    part, objectives, constraints = _utility_nodes(
        graph, rows_for, list(zip(lo, hi)), np.broadcast_to(utility_weights, (n,)), eps,
        utility, curvature, shift)
    theta = 0.5
    for l, users in enumerate(link_users):
        room = capacities[l] - lo[users].sum()
        if room <= 0:
            raise ProblemError(f"link {l}: capacity {capacities[l]} admits no strictly feasible rates")
        theta = min(theta, 0.5 * room / (hi[users] - lo[users]).sum())
    witness = lo + theta * (hi - lo)
    return PartitionedProblem(graph, part.layout, objectives, constraints, witness, scenario="num",
                              meta={"links": link_users, "capacities": capacities.tolist(),
                                    "eps": eps, "utility": utility})


def generate_resource_allocation(graph: Graph, capacities, utility_weights, eps: float,
                                 utility: str = "log", curvature=None, shift: float = 1.0,
                                 rate_boxes=None) -> PartitionedProblem:
    """Resource sharing: node i requires sum_{j in N_i + i} x_j <= r_i.

    Rates are boxed in ``[0, max r]`` unless ``rate_boxes`` is given.
    """
    n = graph.n
    eps = float(eps)
    if eps <= 0:
        raise ProblemError("resource allocation needs a positive regularization eps")
    r = np.asarray(capacities, dtype=float)
    if r.shape != (n,) or np.any(r <= 0):
        raise ProblemError("capacities must be positive, one per node")
    if rate_boxes is None:
        rate_boxes = [(0.0, float(r.max()))] * n
    lo = np.array([b[0] for b in rate_boxes], dtype=float)
    hi = np.array([b[1] for b in rate_boxes], dtype=float)
    if np.any(lo < 0) or np.any(lo >= hi):
        raise ProblemError("rate boxes must satisfy 0 <= lower < upper")
    curvature = np.zeros(n) if curvature is None else np.broadcast_to(np.asarray(curvature, float), (n,))

    def rows_for(i, members):
        return np.ones((1, len(members))), r[[i]]

    part, objectives, constraints = _utility_nodes(
        graph, rows_for, list(zip(lo, hi)), np.broadcast_to(utility_weights, (n,)), eps,
        utility, curvature, shift)
    theta = 0.5
    for i in range(n):
        members = part.hoods[i].members
        room = r[i] - lo[list(members)].sum()
        if room <= 0:
            raise ProblemError(f"node {i}: capacity admits no strictly feasible allocation")
        theta = min(theta, 0.5 * room / (hi[list(members)] - lo[list(members)]).sum())
    witness = lo + theta * (hi - lo)
    return PartitionedProblem(graph, part.layout, objectives, constraints, witness,
                              scenario="resalloc", meta={"capacities": r.tolist(), "eps": eps,
                                                         "utility": utility})


def generate_wls(graph: Graph, layout: BlockLayout, H: dict, z, eps: float = 0.0,
                 box_radius: float | None = None) -> PartitionedProblem:
    """Least squares sum_i ||z_i - sum_j H_ij x_j||^2 + eps ||x||^2 split by node.

    ``H[(i, j)]`` is the p_i x m_j measurement block; blocks may only couple a
    node with members of its closed neighborhood. Node i's cost is
    ||z_i - G_i y||^2 plus its share of the regularizer.

    Raises
    ------
    ProblemError
        A block couples non-neighbors, or a local Gram matrix is singular
        (only possible with eps == 0).
    """
    part = Partition(graph, layout)
    counts = _copy_counts(graph)
    n = graph.n
    z = [np.atleast_1d(np.asarray(zi, dtype=float)) for zi in z]
    for (i, j), block in H.items():
        if j not in part.hoods[i].slots and np.any(np.asarray(block) != 0):
            raise ProblemError(f"H block ({i}, {j}) couples nodes that are not neighbors")
    objectives = []
    for i in range(n):
        hood = part.hoods[i]
        G = np.zeros((z[i].shape[0], hood.dim))
        for j in hood.members:
            if (i, j) in H:
                G[:, hood.slots[j]] = np.asarray(H[i, j], dtype=float).reshape(z[i].shape[0], layout.sizes[j])
        reg = np.concatenate([np.full(layout.sizes[j], eps / counts[j]) for j in hood.members])
        Q = G.T @ G + np.diag(reg)
        lam_min = np.linalg.eigvalsh(0.5 * (Q + Q.T))[0]
        if lam_min <= 1e-12 * max(1.0, float(np.abs(Q).max())):
            raise ProblemError(f"node {i}: local Gram matrix is singular; use eps > 0")
        objectives.append(QuadraticObjective(Q, -2.0 * G.T @ z[i], float(z[i] @ z[i])))
    if box_radius is None:
        Hess = sum(part.lift(i).T @ objectives[i].Q @ part.lift(i) for i in range(n))
        lin = sum(part.lift(i).T @ objectives[i].r for i in range(n))
        x_ls = np.linalg.solve(Hess, -0.5 * lin)
        box_radius = 10.0 * max(1.0, float(np.linalg.norm(x_ls)))
    constraints = [
        PolyhedralConstraint(np.zeros((0, part.dim(i))), [], -box_radius * np.ones(part.dim(i)),
                             box_radius * np.ones(part.dim(i)))
        for i in range(n)
    ]
    return PartitionedProblem(graph, layout, objectives, constraints, np.zeros(layout.total),
                              scenario="wls", meta={"eps": eps, "box_radius": box_radius})


def random_wls(graph: Graph, seed: int, m_range=(1, 3), p_range=(1, 4), eps: float = 0.1):
    """WLS instance with dense random blocks on the diagonal and along edges."""
    rng = np.random.default_rng(seed)
    sizes = rng.integers(m_range[0], m_range[1] + 1, size=graph.n)
    layout = BlockLayout(tuple(int(m) for m in sizes))
    p = rng.integers(p_range[0], p_range[1] + 1, size=graph.n)
    H = {}
    for i in range(graph.n):
        for j in (i,) + graph.neighbors[i]:
            H[i, j] = rng.standard_normal((int(p[i]), int(sizes[j])))
    z = [rng.standard_normal(int(p[i])) * 5.0 for i in range(graph.n)]
    prob = generate_wls(graph, layout, H, z, eps=eps)
    prob.seed = seed
    return prob
