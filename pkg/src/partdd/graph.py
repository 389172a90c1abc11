"""Undirected, connected coupling graphs.

Nodes are 0-indexed. Neighbor lists are sorted ascending; that order is the
stacking order used by every local vector and dual block downstream.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

__all__ = [
    "Graph",
    "GraphError",
    "erdos_renyi",
    "path_graph",
    "complete_graph",
    "MAX_RESAMPLES",
]

MAX_RESAMPLES = 10_000


class GraphError(ValueError):
    """Invalid or disconnected graph."""


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple[tuple[int, int], ...]
    neighbors: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"graph needs at least one node, got n={self.n}")
        canon = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={self.n}")
            canon.add((min(i, j), max(i, j)))
        edges = tuple(sorted(canon))
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "neighbors", tuple(tuple(sorted(v)) for v in nbrs))
        if not self.is_connected():
            raise GraphError("graph is not connected")

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    def is_connected(self) -> bool:
        seen = np.zeros(self.n, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in self.neighbors[u]:
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
        return bool(seen.all())

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, d: dict) -> "Graph":
        return cls(int(d["n"]), tuple((int(i), int(j)) for i, j in d["edges"]))


def path_graph(n: int) -> Graph:
    if n < 2:
        raise GraphError("path graph needs n >= 2")
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)))


def complete_graph(n: int) -> Graph:
    if n < 2:
        raise GraphError("complete graph needs n >= 2")
    return Graph(n, tuple(combinations(range(n), 2)))


def _sample_edges(rng: np.random.Generator, n: int, p: float) -> list[tuple[int, int]]:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return list(zip(iu[keep].tolist(), ju[keep].tolist()))


def _connected(n: int, edges: list[tuple[int, int]]) -> bool:
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in nbrs[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n


def erdos_renyi(n: int, p: float, seed: int, max_resamples: int = MAX_RESAMPLES) -> Graph:
    """Connected G(n, p) graph.

    Disconnected draws are rejected and redrawn from the same generator, so the
    result is a sample of G(n, p) conditioned on connectivity and depends only
    on ``(n, p, seed)``.

    Raises
    ------
    GraphError
        If no connected graph was drawn within ``max_resamples`` attempts.
    """
    if n < 2:
        raise GraphError("Erdos-Renyi graph needs n >= 2")
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"edge probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    for _ in range(max_resamples):
        edges = _sample_edges(rng, n, p)
        if _connected(n, edges):
            return Graph(n, tuple(edges))
    raise GraphError(
        f"no connected G({n}, {p}) sample in {max_resamples} draws; p is too small for n"
    )
