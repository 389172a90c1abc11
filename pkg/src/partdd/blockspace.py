"""Block layout of the global variable and per-node local views.

Node ``i`` stores a local vector stacking its own block first and then the
blocks of its neighbors in ascending order. All objectives, constraints and
messages use that convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph

__all__ = ["BlockLayout", "Neighborhood", "Partition"]


@dataclass(frozen=True)
class BlockLayout:
    sizes: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sizes = tuple(int(m) for m in self.sizes)
        if not sizes or any(m <= 0 for m in sizes):
            raise ValueError(f"block sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "offsets", tuple(np.concatenate([[0], np.cumsum(sizes)]).tolist()))

    @property
    def n(self) -> int:
        return len(self.sizes)

    @property
    def total(self) -> int:
        return self.offsets[-1]

    def block(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i + 1])

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes)}

    @classmethod
    def from_dict(cls, d: dict) -> "BlockLayout":
        return cls(tuple(d["sizes"]))


@dataclass(frozen=True)
class Neighborhood:
    """Closed neighborhood of ``owner`` with the slot of each member."""

    owner: int
    members: tuple[int, ...]
    slots: dict[int, slice]
    dim: int

    def slot(self, j: int) -> slice:
        try:
            return self.slots[j]
        except KeyError:
            raise KeyError(f"node {j} is not in the closed neighborhood of {self.owner}") from None

    @property
    def neighbors(self) -> tuple[int, ...]:
        return self.members[1:]


class Partition:
    """Graph plus block layout; builds every node's closed neighborhood."""

    def __init__(self, graph: Graph, layout: BlockLayout):
        if graph.n != layout.n:
            raise ValueError(f"graph has {graph.n} nodes but layout has {layout.n} blocks")
        self.graph = graph
        self.layout = layout
        hoods = []
        for i in range(graph.n):
            members = (i,) + graph.neighbors[i]
            slots, pos = {}, 0
            for j in members:
                m = layout.sizes[j]
                slots[j] = slice(pos, pos + m)
                pos += m
            hoods.append(Neighborhood(i, members, slots, pos))
        self.hoods: tuple[Neighborhood, ...] = tuple(hoods)
        # global indices of each local vector entry, in slot order
        self._index = tuple(
            np.concatenate([np.arange(layout.offsets[j], layout.offsets[j + 1]) for j in h.members])
            for h in hoods
        )

    @property
    def n(self) -> int:
        return self.graph.n

    def dim(self, i: int) -> int:
        return self.hoods[i].dim

    def slot_of(self, i: int, j: int) -> slice:
        return self.hoods[i].slot(j)

    def local_index(self, i: int) -> np.ndarray:
        return self._index[i]

    def gather(self, x: np.ndarray, i: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.layout.total,):
            raise ValueError(f"expected a vector of length {self.layout.total}, got {x.shape}")
        return x[self._index[i]]

    def scatter(self, y: np.ndarray, i: int, out: np.ndarray | None = None) -> np.ndarray:
        """Write the blocks of local vector ``y`` into a global vector."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim(i),):
            raise ValueError(f"node {i} local vector has length {self.dim(i)}, got {y.shape}")
        if out is None:
            out = np.zeros(self.layout.total)
        out[self._index[i]] = y
        return out

    def lift(self, i: int) -> np.ndarray:
        """Selection matrix P_i with gather(x, i) == P_i @ x."""
        P = np.zeros((self.dim(i), self.layout.total))
        P[np.arange(self.dim(i)), self._index[i]] = 1.0
        return P
