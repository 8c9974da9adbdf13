"""Test-bed topologies: random geometric graphs, grids, complete graphs.

Graphs are plain undirected adjacency structures over nodes 0..n-1, with
optional planar positions in the unit square. Builders are deterministic
for a fixed seed.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass
class Graph:
    """Undirected graph with optional node positions.

    Attributes:
        kind: construction family ("rgg", "grid", "complete", or "custom").
        n: number of nodes.
        positions: (n, 2) float array of coordinates in [0, 1]^2, or None
            for graphs without geometry.
        neighbors: per-node sorted integer arrays of adjacent nodes.
        edges: list of (i, j) pairs with i < j, sorted lexicographically.
    """

    kind: str
    n: int
    positions: np.ndarray | None
    neighbors: list[np.ndarray]
    edges: list[tuple[int, int]]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"graph needs at least one node, got n={self.n}")
        if len(self.neighbors) != self.n:
            raise ValueError("neighbor table length does not match n")
        if self.positions is not None and self.positions.shape != (self.n, 2):
            raise ValueError(
                f"positions must be ({self.n}, 2), got {self.positions.shape}"
            )

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbors], dtype=np.int64)

    @property
    def num_edges(self) -> int:
        return len(self.edges)


def _neighbors_from_edges(n: int, edges: list[tuple[int, int]]) -> list[np.ndarray]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    return [np.array(sorted(a), dtype=np.int64) for a in adj]


def make_graph(
    n: int,
    edges: list[tuple[int, int]],
    positions: np.ndarray | None = None,
    kind: str = "custom",
) -> Graph:
    """Build a Graph from an explicit edge list. Edges are normalized to i < j."""
    norm = []
    seen = set()
    for i, j in edges:
        if i == j:
            raise ValueError(f"self-loop ({i}, {j}) not allowed")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
        e = (min(i, j), max(i, j))
        if e in seen:
            raise ValueError(f"duplicate edge {e}")
        seen.add(e)
        norm.append(e)
    norm.sort()
    return Graph(kind, n, positions, _neighbors_from_edges(n, norm), norm)


def connectivity_radius(n: int, c: float = 2.0) -> float:
    """Radius c * sqrt(log(n) / n) for random geometric graphs.

    At c >= 1 this is the standard connectivity scaling for n uniform
    points in the unit square; the default c = 2 keeps small test graphs
    connected with comfortable margin.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if c <= 0:
        raise ValueError(f"need c > 0, got {c}")
    return c * math.sqrt(math.log(n) / n)


def build_rgg(n: int, radius: float, seed: int) -> Graph:
    """Random geometric graph: n uniform points in [0, 1]^2, edge iff
    euclidean distance <= radius (ties included).

    The constructor does not retry on disconnected outcomes; callers that
    need a connected graph should check is_connected and reseed.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if radius <= 0:
        raise ValueError(f"need radius > 0, got {radius}")
    rng = np.random.default_rng(seed)
    pos = rng.random((n, 2))
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    ii, jj = np.nonzero(np.triu(dist <= radius, k=1))
    edges = [(int(i), int(j)) for i, j in zip(ii, jj)]
    return Graph("rgg", n, pos, _neighbors_from_edges(n, edges), edges)


def build_grid(rows: int, cols: int) -> Graph:
    """Rectangular 4-neighbor lattice with cell-center positions in [0, 1]^2."""
    if rows < 1 or cols < 1:
        raise ValueError(f"need rows, cols >= 1, got {rows}x{cols}")
    n = rows * cols
    if n < 2:
        raise ValueError("grid needs at least two nodes")
    pos = np.empty((n, 2))
    edges = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            pos[k] = ((c + 0.5) / cols, (r + 0.5) / rows)
            if c + 1 < cols:
                edges.append((k, k + 1))
            if r + 1 < rows:
                edges.append((k, k + cols))
    edges.sort()
    return Graph("grid", n, pos, _neighbors_from_edges(n, edges), edges)


def build_complete(n: int) -> Graph:
    """Complete graph K_n, no geometry."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return Graph("complete", n, None, _neighbors_from_edges(n, edges), edges)


def is_connected(graph: Graph) -> bool:
    """BFS reachability of every node from node 0."""
    if graph.n == 1:
        return True
    seen = np.zeros(graph.n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        u = queue.popleft()
        for v in graph.neighbors[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                queue.append(int(v))
    return count == graph.n


def save_graph(graph: Graph, path: str) -> None:
    """Write a plain-text edge list: header, one node line per position
    (index, x, y), then one edge line per edge (i, j).

    Floats are written with repr so a load round-trips bit-exactly.
    """
    lines = ["# gossiplab edge list v1"]
    lines.append(f"kind {graph.kind}")
    lines.append(f"n {graph.n}")
    has_pos = graph.positions is not None
    lines.append(f"positions {int(has_pos)}")
    if has_pos:
        for i in range(graph.n):
            x, y = graph.positions[i]
            lines.append(f"{i} {float(x)!r} {float(y)!r}")
    lines.append(f"edges {len(graph.edges)}")
    for i, j in graph.edges:
        lines.append(f"{i} {j}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_graph(path: str) -> Graph:
    """Read a graph written by save_graph. Validates counts and ranges."""
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    try:
        kind = raw[0].split()[1]
        n = int(raw[1].split()[1])
        has_pos = bool(int(raw[2].split()[1]))
        at = 3
        positions = None
        if has_pos:
            positions = np.empty((n, 2))
            for i in range(n):
                idx, x, y = raw[at + i].split()
                if int(idx) != i:
                    raise ValueError(f"node line {i} has index {idx}")
                positions[i] = (float(x), float(y))
            at += n
        m = int(raw[at].split()[1])
        at += 1
        edges = []
        for k in range(m):
            i, j = map(int, raw[at + k].split())
            edges.append((i, j))
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed graph file {path}: {exc}") from exc
    return make_graph(n, edges, positions, kind)
