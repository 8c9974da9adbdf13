"""Per-tick exchange rules.

Each protocol binds a graph (and whatever parameters it needs) and
exposes step(state, rng): mutate state.x in place, add to the message and
bit counters, and return the tuple of nodes that were set to their joint
mean, or None when the update is not a set average. The engine owns the
tick counter and the stop logic.
"""

from __future__ import annotations

import numpy as np

from .spectral import GossipDesign, uniform_design
from .topology import Graph

BITS_PER_VALUE = 64  # unquantized scalar on the wire


def greedy_route(graph: Graph, src: int, target) -> list[int]:
    """Greedy geographic route from src toward an arbitrary target point.

    Repeatedly hop to the neighbor closest to the target among those
    strictly closer than the current node; ties go to the lowest node
    index. Stops at a local minimum, which becomes the route's terminal.
    Distance to the target strictly decreases along the route, so it
    terminates in fewer than n hops.
    """
    if graph.positions is None:
        raise ValueError("greedy routing needs node positions")
    if not 0 <= src < graph.n:
        raise ValueError(f"source {src} out of range")
    pos = graph.positions
    t = np.asarray(target, dtype=float)
    route = [src]
    cur = src
    d_cur = float(np.hypot(*(pos[src] - t)))
    while True:
        nb = graph.neighbors[cur]
        if len(nb) == 0:
            break
        d_nb = np.hypot(pos[nb, 0] - t[0], pos[nb, 1] - t[1])
        k = int(np.argmin(d_nb))  # first minimum; neighbors sorted, so lowest index
        if d_nb[k] >= d_cur:
            break
        cur = int(nb[k])
        d_cur = float(d_nb[k])
        route.append(cur)
    return route


class PairwiseGossip:
    """Wake a uniform node, draw a partner from the design, average the pair."""

    name = "pairwise"

    def __init__(self, graph: Graph, design: GossipDesign | None = None,
                 bits_per_value: int = BITS_PER_VALUE):
        self.graph = graph
        self.design = design if design is not None else uniform_design(graph)
        self.bits_per_value = bits_per_value

    def step(self, state, rng):
        i = int(rng.integers(self.graph.n))
        j = self.design.sample_partner(i, rng)
        if j < 0:
            return None  # idle tick (self-pick under the uniform-global design)
        m = 0.5 * (state.x[i] + state.x[j])
        state.x[i] = m
        state.x[j] = m
        state.messages += 2
        state.bits += 2 * self.bits_per_value
        return (i, j)


class BroadcastGossip:
    """Wake a uniform node and push its value to every neighbor.

    Each listener j moves to gamma * x_j + (1 - gamma) * x_i; the
    broadcaster keeps its value. One message per tick. The sum is not
    preserved, so the consensus value is random (unbiased over runs).
    """

    name = "broadcast"

    def __init__(self, graph: Graph, gamma: float = 0.5,
                 bits_per_value: int = BITS_PER_VALUE):
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"need 0 < gamma < 1, got {gamma}")
        self.graph = graph
        self.gamma = gamma
        self.bits_per_value = bits_per_value

    def step(self, state, rng):
        i = int(rng.integers(self.graph.n))
        nb = self.graph.neighbors[i]
        state.x[nb] = self.gamma * state.x[nb] + (1.0 - self.gamma) * state.x[i]
        state.messages += 1
        state.bits += self.bits_per_value
        return None


class GeographicGossip:
    """Route toward a random target, then average endpoint with terminal.

    The woken node draws a uniform target in the unit square, routes
    greedily, and runs a pairwise exchange with the route's terminal
    node over the multi-hop path: 2 * hops messages. Terminal equal to
    the source leaves the state unchanged.
    """

    name = "geographic"

    def __init__(self, graph: Graph, bits_per_value: int = BITS_PER_VALUE):
        if graph.positions is None:
            raise ValueError("geographic gossip needs node positions")
        self.graph = graph
        self.bits_per_value = bits_per_value

    def step(self, state, rng):
        i = int(rng.integers(self.graph.n))
        target = rng.random(2)
        route = greedy_route(self.graph, i, target)
        if len(route) == 1:
            return None
        u = route[-1]
        hops = len(route) - 1
        m = 0.5 * (state.x[i] + state.x[u])
        state.x[i] = m
        state.x[u] = m
        state.messages += 2 * hops
        state.bits += 2 * hops * self.bits_per_value
        return (i, u)


class PathAveraging:
    """Average every node along the greedy route in one interaction.

    The route aggregates a running sum on the way out and distributes the
    mean on the way back, so the message cost is still 2 * hops while the
    whole path is averaged at once.
    """

    name = "path"

    def __init__(self, graph: Graph, bits_per_value: int = BITS_PER_VALUE):
        if graph.positions is None:
            raise ValueError("path averaging needs node positions")
        self.graph = graph
        self.bits_per_value = bits_per_value

    def step(self, state, rng):
        i = int(rng.integers(self.graph.n))
        target = rng.random(2)
        route = greedy_route(self.graph, i, target)
        if len(route) == 1:
            return None
        idx = np.array(route, dtype=np.int64)
        m = float(state.x[idx].mean())
        state.x[idx] = m
        hops = len(route) - 1
        state.messages += 2 * hops
        state.bits += 2 * hops * self.bits_per_value
        return tuple(route)


PROTOCOLS = {
    "pairwise": PairwiseGossip,
    "broadcast": BroadcastGossip,
    "geographic": GeographicGossip,
    "path": PathAveraging,
}


def make_protocol(name: str, graph: Graph, design: GossipDesign | None = None,
                  gamma: float = 0.5, bits_per_value: int = BITS_PER_VALUE):
    """Build a protocol by name; unknown names list the valid ones."""
    if name == "pairwise":
        return PairwiseGossip(graph, design, bits_per_value)
    if name == "broadcast":
        return BroadcastGossip(graph, gamma, bits_per_value)
    if name == "geographic":
        return GeographicGossip(graph, bits_per_value)
    if name == "path":
        return PathAveraging(graph, bits_per_value)
    raise ValueError(f"unknown protocol {name!r}; choose from {sorted(PROTOCOLS)}")
