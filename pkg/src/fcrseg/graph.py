"""Object adjacency graphs and an exact k-colorability oracle.

Two instances are neighbors when any of their pixels lie within a given
Chebyshev distance of each other. Background can join the graph as
pseudo-object 0 so that objects along the background border are pushed away
from the background's embedding channel.

The coloring oracle is an exact backtracking search, small-scale by design:
it exists to validate that four output channels are enough for real
adjacency structures, not to color large graphs fast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DataError
from .imgdata import LabelImage, labels_of

MAX_COLORING_NODES = 1000


@dataclass(frozen=True)
class ObjectGraph:
    """Symmetric adjacency over instance ids (plus optional background 0)."""

    n_objects: int
    neighbors: dict[int, set[int]]
    includes_background: bool = False

    def __post_init__(self):
        valid = set(range(0 if self.includes_background else 1, self.n_objects + 1))
        for i, nbrs in self.neighbors.items():
            if i not in valid:
                raise DataError(f"graph node {i} outside id range")
            if i in nbrs:
                raise DataError(f"graph has self-loop at {i}")
            for j in nbrs:
                if j not in self.neighbors or i not in self.neighbors[j]:
                    raise DataError(f"graph edge ({i}, {j}) is not symmetric")

    @property
    def node_ids(self) -> list[int]:
        return sorted(self.neighbors)

    @property
    def n_edges(self) -> int:
        return sum(len(v) for v in self.neighbors.values()) // 2

    def edges(self) -> list[tuple[int, int]]:
        return sorted((i, j) for i, nbrs in self.neighbors.items() for j in nbrs if i < j)


@dataclass(frozen=True)
class Coloring:
    """A proper node coloring: no edge joins two equal colors."""

    assignment: dict[int, int]

    def __getitem__(self, node: int) -> int:
        return self.assignment[node]


def is_proper(g: ObjectGraph, coloring: Coloring) -> bool:
    return all(coloring[i] != coloring[j] for i, j in g.edges())


def build_adjacency(lbl, radius: int = 3, include_background: bool = True) -> ObjectGraph:
    """Neighbor graph of a label map.

    Objects i and j are adjacent iff some pixel of i lies within Chebyshev
    distance ``radius`` of some pixel of j. With ``include_background``,
    id 0 becomes a node adjacent to every object within ``radius`` of a
    background pixel (skipped when the map has no background at all).
    """
    if radius < 1:
        raise DataError(f"radius must be >= 1, got {radius}")
    if not isinstance(lbl, LabelImage):
        lbl = LabelImage(np.asarray(lbl))  # validates id contiguity
    labels = labels_of(lbl)
    m = int(labels.max(initial=0))
    include_background = include_background and bool((labels == 0).any())
    nodes = list(range(1, m + 1))
    if include_background:
        nodes.insert(0, 0)
    neighbors: dict[int, set[int]] = {i: set() for i in nodes}

    h, w = labels.shape
    pair_codes: list[np.ndarray] = []
    for dy in range(0, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx <= 0:
                continue
            a = labels[: h - dy, max(0, -dx): w - max(0, dx)]
            b = labels[dy:, max(0, dx): w + min(0, dx)]
            diff = a != b
            if not include_background:
                diff &= (a > 0) & (b > 0)
            if diff.any():
                lo = np.minimum(a[diff], b[diff]).astype(np.int64)
                hi = np.maximum(a[diff], b[diff]).astype(np.int64)
                pair_codes.append(lo * (m + 1) + hi)
    if pair_codes:
        for code in np.unique(np.concatenate(pair_codes)):
            i, j = int(code // (m + 1)), int(code % (m + 1))
            neighbors[i].add(j)
            neighbors[j].add(i)

    return ObjectGraph(n_objects=m, neighbors=neighbors, includes_background=include_background)


def background_exclusive_coloring(g: ObjectGraph, k: int = 4) -> Coloring | None:
    """A proper k-coloring in which no object shares the background color.

    The background node is made adjacent to every object before coloring,
    so channel removal by border majority cannot delete an enclosed object.
    Returns None when the objects alone already need all k colors; without
    a background node this is a plain coloring.
    """
    if 0 not in g.neighbors:
        return four_colorable(g, k)
    neighbors = {i: set(v) for i, v in g.neighbors.items()}
    for i in neighbors:
        if i != 0:
            neighbors[0].add(i)
            neighbors[i].add(0)
    return four_colorable(
        ObjectGraph(g.n_objects, neighbors, includes_background=True), k
    )


def four_colorable(g: ObjectGraph, k: int = 4) -> Coloring | None:
    """Exact backtracking search for a proper k-coloring.

    Returns a Coloring, or None when no proper k-coloring exists. Nodes are
    ordered background first, then by decreasing degree; the palette is
    capped at one more than the colors already in use, which prunes color
    permutations and keeps infeasibility proofs fast.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    nodes = g.node_ids
    if len(nodes) > MAX_COLORING_NODES:
        raise CapacityError(
            f"coloring oracle is limited to {MAX_COLORING_NODES} nodes, got {len(nodes)}"
        )
    if not nodes:
        return Coloring({})
    order = sorted(nodes, key=lambda i: (i != 0, -len(g.neighbors[i]), i))
    assignment: dict[int, int] = {}

    def admissible(node: int, limit: int) -> list[int]:
        used = {assignment[j] for j in g.neighbors[node] if j in assignment}
        return [c for c in range(limit) if c not in used]

    def backtrack(pos: int, n_used: int) -> bool:
        if pos == len(order):
            return True
        node = order[pos]
        for c in admissible(node, min(k, n_used + 1)):
            assignment[node] = c
            if backtrack(pos + 1, max(n_used, c + 1)):
                return True
            del assignment[node]
        return False

    if backtrack(0, 0):
        return Coloring(dict(assignment))
    return None
