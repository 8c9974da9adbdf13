"""Averaging matrices and the spectral quantities that govern gossip convergence.

A single asynchronous interaction replaces the values of a node set S by
their mean, which is multiplication by a set-averaging matrix: entries
1/|S| on S x S, identity elsewhere. These matrices are symmetric, doubly
stochastic, positive semidefinite projections. Convergence speed of a
randomized protocol is controlled by the second-largest eigenvalue of the
expected matrix E[W] under the activation design.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .topology import Graph


def pairwise_matrix(i: int, j: int, n: int) -> np.ndarray:
    """Averaging matrix for the pair {i, j} in an n-node network."""
    return set_averaging_matrix([i, j], n)


def set_averaging_matrix(nodes, n: int) -> np.ndarray:
    """Averaging matrix for an arbitrary node set.

    Rows and columns over `nodes` carry 1/|S|; every other node keeps its
    value. The result is symmetric, doubly stochastic, and idempotent.
    """
    idx = np.asarray(list(nodes), dtype=np.int64)
    if idx.size == 0:
        raise ValueError("averaging set must be non-empty")
    if len(set(idx.tolist())) != idx.size:
        raise ValueError(f"averaging set has repeated nodes: {sorted(idx.tolist())}")
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError(f"averaging set {sorted(idx.tolist())} out of range for n={n}")
    W = np.eye(n)
    W[np.ix_(idx, idx)] = 1.0 / idx.size
    return W


@dataclass
class GossipDesign:
    """Partner-selection probabilities for asynchronous activation.

    At each tick a uniformly random node i wakes and draws a partner j
    with probability probs[i][k] for the k-th entry of graph.neighbors[i].
    idle[i] is the probability that the woken node does nothing for that
    tick; each row satisfies sum(probs[i]) + idle[i] = 1.

    style is "uniform-neighbor" (partner uniform over neighbors),
    "uniform-global" (partner uniform over all n nodes, self-picks idle;
    only sensible on the complete graph), or "general".
    """

    graph: Graph
    probs: list[np.ndarray]
    idle: np.ndarray
    style: str = "general"

    def __post_init__(self):
        n = self.graph.n
        if len(self.probs) != n or self.idle.shape != (n,):
            raise ValueError("design tables do not match graph size")
        for i in range(n):
            p = self.probs[i]
            if p.shape != self.graph.neighbors[i].shape:
                raise ValueError(f"row {i} does not align with the neighbor list")
            if (p < 0).any() or self.idle[i] < 0:
                raise ValueError(f"negative selection probability at node {i}")
            total = p.sum() + self.idle[i]
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"row {i} sums to {total}, expected 1")

    def sample_partner(self, i: int, rng: np.random.Generator) -> int:
        """Draw a partner for woken node i; -1 means an idle tick."""
        r = rng.random()
        if r < self.idle[i]:
            return -1
        r -= self.idle[i]
        acc = np.cumsum(self.probs[i])
        k = int(np.searchsorted(acc, r, side="right"))
        k = min(k, len(acc) - 1)
        return int(self.graph.neighbors[i][k])


def uniform_design(graph: Graph) -> GossipDesign:
    """The default activation design.

    On sparse graphs the woken node picks a neighbor uniformly
    (probability 1/deg). On the complete graph it picks uniformly from
    the whole network, n choices including itself, and a self-pick wastes
    the tick; this is the classical uniform gossip model and is the one
    whose expected matrix has second eigenvalue exactly 1 - 1/n.
    """
    n = graph.n
    if graph.kind == "complete":
        probs = [np.full(n - 1, 1.0 / n) for _ in range(n)]
        idle = np.full(n, 1.0 / n)
        return GossipDesign(graph, probs, idle, style="uniform-global")
    probs = []
    for i in range(n):
        d = graph.degree(i)
        if d == 0:
            raise ValueError(f"node {i} is isolated; no partner distribution exists")
        probs.append(np.full(d, 1.0 / d))
    return GossipDesign(graph, probs, np.zeros(n), style="uniform-neighbor")


def expected_matrix(design: GossipDesign) -> np.ndarray:
    """E[W] under uniform wake-up: sum over (i, j) of (1/n) P_ij W_ij.

    Using W_ij = I - (e_i - e_j)(e_i - e_j)^T / 2 the sum collapses to
    I - L_w / (2n) where L_w is the Laplacian of the graph weighted by
    w_ij = P_ij + P_ji, so the result is exactly symmetric.
    """
    g = design.graph
    n = g.n
    W = np.eye(n)
    lookup = [
        {int(j): float(p) for j, p in zip(g.neighbors[i], design.probs[i])}
        for i in range(n)
    ]
    for i, j in g.edges:
        w = (lookup[i][j] + lookup[j][i]) / (2.0 * n)
        W[i, i] -= w
        W[j, j] -= w
        W[i, j] += w
        W[j, i] += w
    return W


def second_eigenvalue(W: np.ndarray, asym_tol: float = 1e-9) -> float:
    """Second-largest eigenvalue (by value, not magnitude) of a symmetric W."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"need a square matrix, got shape {W.shape}")
    if W.shape[0] < 2:
        raise ValueError("second eigenvalue needs at least a 2x2 matrix")
    asym = float(np.abs(W - W.T).max())
    if asym > asym_tol:
        raise ValueError(f"matrix is not symmetric (max |W - W^T| = {asym:.3e})")
    vals = np.linalg.eigvalsh((W + W.T) / 2.0)
    return float(vals[-2])


def smallest_eigenvalue(W: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix, for diagnostics."""
    return float(np.linalg.eigvalsh((W + np.asarray(W, dtype=float).T) / 2.0)[0])


class AveragingTimeBound(NamedTuple):
    iterations: float        # 3 log(1/eps) / log(1/lambda2)
    iterations_loose: float  # 3 log(1/eps) / (1 - lambda2)


def averaging_time_bound(lambda2: float, eps: float) -> AveragingTimeBound:
    """Upper bounds on the eps-averaging time from the spectral gap.

    The first form uses log(1/lambda2) and is the sharper of the two; the
    second replaces it by the gap 1 - lambda2 and is never smaller. A
    lambda2 of zero means one interaction suffices, so the sharp bound is
    reported as 1. lambda2 >= 1 means the design does not average at all
    and is rejected.
    """
    if not 0.0 <= lambda2 < 1.0:
        raise ValueError(f"need 0 <= lambda2 < 1, got {lambda2}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"need 0 < eps < 1, got {eps}")
    level = 3.0 * math.log(1.0 / eps)
    tight = 1.0 if lambda2 == 0.0 else level / math.log(1.0 / lambda2)
    return AveragingTimeBound(tight, level / (1.0 - lambda2))


def validate_averaging_matrix(
    W: np.ndarray,
    idempotent: bool = True,
    tol: float = 1e-12,
    eig_floor: float = -1e-9,
) -> None:
    """Check the structural invariants of an averaging matrix.

    Raises ValueError on the first violation: row or column sums off from
    1 by more than tol, asymmetry beyond tol, an eigenvalue below
    eig_floor, or (for set-averaging matrices) W @ W differing from W by
    more than tol.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    ones = np.ones(n)
    row_err = float(np.abs(W @ ones - ones).max())
    if row_err > tol:
        raise ValueError(f"row sums off by {row_err:.3e}")
    col_err = float(np.abs(ones @ W - ones).max())
    if col_err > tol:
        raise ValueError(f"column sums off by {col_err:.3e}")
    asym = float(np.abs(W - W.T).max())
    if asym > tol:
        raise ValueError(f"asymmetry {asym:.3e}")
    lo = float(np.linalg.eigvalsh((W + W.T) / 2.0)[0])
    if lo < eig_floor:
        raise ValueError(f"eigenvalue {lo:.3e} below floor")
    if idempotent:
        idem = float(np.abs(W @ W - W).max())
        if idem > tol:
            raise ValueError(f"not idempotent, |W^2 - W| = {idem:.3e}")


def metropolis_weights(graph: Graph) -> np.ndarray:
    """Symmetric doubly stochastic weights W_ij = 1 / (1 + max(deg_i, deg_j)).

    The standard synchronous consensus matrix built from local degrees;
    self-weights absorb the remainder. Not a projection.
    """
    n = graph.n
    W = np.zeros((n, n))
    deg = graph.degrees
    for i, j in graph.edges:
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, j] = w
        W[j, i] = w
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return W
