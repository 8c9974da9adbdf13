"""Asynchronous gossip engine.

Time is a sequence of discrete ticks; at each tick one node wakes and one
interaction happens. This is the embedded chain of the usual model where
every node carries an independent rate-1 Poisson clock, so n ticks
correspond to one unit of absolute time. Runs are deterministic for a
fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .protocols import make_protocol
from .spectral import (
    averaging_time_bound,
    expected_matrix,
    second_eigenvalue,
    uniform_design,
)
from .topology import Graph, is_connected


@dataclass
class GossipState:
    """Mutable per-run state: values, tick count, transport counters."""

    x: np.ndarray
    t: int = 0
    messages: int = 0
    bits: int = 0


@dataclass
class StopRule:
    """When to end a run. At least one field must be set.

    eps stops once the normalized error drops below eps (checked at
    sample points, so the stop can overshoot by up to sample_every
    ticks). An eps-only rule never terminates for protocols that do not
    converge to the initial average; pair it with a cap unless the
    protocol is known to average.
    """

    max_ticks: int | None = None
    eps: float | None = None
    max_messages: int | None = None

    def __post_init__(self):
        if self.max_ticks is None and self.eps is None and self.max_messages is None:
            raise ValueError("stop rule needs max_ticks, eps, or max_messages")
        if self.max_ticks is not None and self.max_ticks < 1:
            raise ValueError(f"need max_ticks >= 1, got {self.max_ticks}")
        if self.eps is not None and not 0.0 < self.eps < 1.0:
            raise ValueError(f"need 0 < eps < 1, got {self.eps}")
        if self.max_messages is not None and self.max_messages < 1:
            raise ValueError(f"need max_messages >= 1, got {self.max_messages}")


@dataclass
class GossipTrace:
    """Sampled error trajectory plus the exact terminal state.

    Error is ||x(t) - mean(x0) * 1|| / ||x0||, recorded at t = 0, every
    sample_every ticks, and at the final tick.
    """

    times: np.ndarray
    errors: np.ndarray
    messages: np.ndarray
    bits: np.ndarray
    final: GossipState
    x_ave: float
    x0_norm: float
    stop_reason: str
    converged: bool

    def rows(self):
        for k in range(len(self.times)):
            yield (int(self.times[k]), float(self.errors[k]),
                   int(self.messages[k]), int(self.bits[k]))


def _check_connected(graph: Graph) -> None:
    if not is_connected(graph):
        raise ValueError(
            "graph is disconnected; gossip cannot average across components "
            f"(n={graph.n}, edges={graph.num_edges})"
        )


def run(protocol, graph: Graph, x0, stop: StopRule, seed: int,
        design=None, gamma: float = 0.5, p_loss: float = 0.0,
        sample_every: int | None = None, bits_per_value: int = 64) -> GossipTrace:
    """Simulate one run and return its sampled trace.

    protocol is a name ("pairwise", "broadcast", "geographic", "path") or
    any object with step(state, rng). p_loss is an i.i.d. chance that a
    tick's interaction is silently lost: the tick still counts, nothing
    moves, no messages are charged.
    """
    if isinstance(protocol, str):
        protocol = make_protocol(protocol, graph, design, gamma, bits_per_value)
    _check_connected(graph)
    if not 0.0 <= p_loss < 1.0:
        raise ValueError(f"need 0 <= p_loss < 1, got {p_loss}")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (graph.n,):
        raise ValueError(f"x0 must have shape ({graph.n},), got {x0.shape}")
    if not np.isfinite(x0).all():
        raise ValueError("x0 contains non-finite values")
    if sample_every is None:
        sample_every = graph.n
    if sample_every < 1:
        raise ValueError(f"need sample_every >= 1, got {sample_every}")

    state = GossipState(x=x0.copy())
    x_ave = float(x0.mean())
    x0_norm = float(np.linalg.norm(x0))
    denom = x0_norm if x0_norm > 0.0 else 1.0
    rng = np.random.default_rng(seed)

    times, errors, messages, bits = [], [], [], []

    def error_now() -> float:
        return float(np.linalg.norm(state.x - x_ave)) / denom

    def record(err: float) -> None:
        times.append(state.t)
        errors.append(err)
        messages.append(state.messages)
        bits.append(state.bits)

    err = error_now()
    record(err)
    reason = None
    if stop.eps is not None and err < stop.eps:
        reason = "eps"
    while reason is None:
        if stop.max_ticks is not None and state.t >= stop.max_ticks:
            reason = "max_ticks"
            break
        if stop.max_messages is not None and state.messages >= stop.max_messages:
            reason = "max_messages"
            break
        if p_loss > 0.0 and rng.random() < p_loss:
            pass  # lost interaction, tick still spent
        else:
            protocol.step(state, rng)
        state.t += 1
        if state.t % sample_every == 0:
            err = error_now()
            record(err)
            if stop.eps is not None and err < stop.eps:
                reason = "eps"
    if times[-1] != state.t:
        record(error_now())
    converged = stop.eps is None or reason == "eps"
    return GossipTrace(
        times=np.array(times, dtype=np.int64),
        errors=np.array(errors),
        messages=np.array(messages, dtype=np.int64),
        bits=np.array(bits, dtype=np.int64),
        final=state, x_ave=x_ave, x0_norm=x0_norm,
        stop_reason=reason, converged=converged,
    )


@dataclass
class AveragingTimeResult:
    """Outcome of an empirical averaging-time estimate.

    converged is False when too many trials still sat above eps at the
    tick cap; cap_ticks records the cap so the failure is explicit.
    hit_times / messages_at_hit are per-trial, -1 where the cap won.
    """

    converged: bool
    t_ave: int | None
    messages: float | None
    eps: float
    trials: int
    cap_ticks: int
    hit_times: np.ndarray
    messages_at_hit: np.ndarray


def spike_vector(n: int) -> np.ndarray:
    """n * e_1: all mass on node 0, the worst-case surrogate initial vector."""
    x = np.zeros(n)
    x[0] = float(n)
    return x


def split_vector(n: int) -> np.ndarray:
    """Alternating +1/-1, the balanced-disagreement initial vector."""
    x = np.ones(n)
    x[1::2] = -1.0
    return x


def default_tick_cap(graph: Graph, eps: float, design=None) -> int:
    """Generous cap: 12x the loose spectral bound for the pairwise design."""
    design = design if design is not None else uniform_design(graph)
    lam2 = second_eigenvalue(expected_matrix(design))
    bound = averaging_time_bound(lam2, eps).iterations_loose
    return int(math.ceil(12.0 * bound)) + graph.n


def empirical_averaging_time(protocol, graph: Graph, eps: float, trials: int,
                             seed: int, design=None, cap_ticks: int | None = None,
                             x0: str = "spike", gamma: float = 0.5,
                             bits_per_value: int = 64) -> AveragingTimeResult:
    """Estimate the eps-averaging time over repeated trials.

    Reports the smallest tick t at which the fraction of trials with
    normalized error still >= eps is itself <= eps. Error is monotone
    along a trial for set-averaging protocols, so per-trial first hitting
    times settle this: with k = floor(eps * trials) stragglers allowed,
    the answer is the (trials - k)-th smallest hitting time. Message cost
    is the median, across trials that reached eps, of the messages spent
    up to the trial's own hitting time.

    x0 selects the initial vector: "spike" (n * e_1) or "split" (+1/-1).
    Trials run on independent seed streams derived from (seed, trial);
    the pairwise protocol under a uniform design takes a vectorized path
    that advances all trials jointly from a single (seed,)-derived
    stream. Either way the result is deterministic in the arguments.
    """
    if trials < 20:
        raise ValueError(f"need trials >= 20 for a meaningful tail, got {trials}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"need 0 < eps < 1, got {eps}")
    _check_connected(graph)
    if x0 == "spike":
        x0_vec = spike_vector(graph.n)
    elif x0 == "split":
        x0_vec = split_vector(graph.n)
    else:
        raise ValueError(f"x0 must be 'spike' or 'split', got {x0!r}")
    if protocol == "pairwise" and design is None:
        design = uniform_design(graph)
    if cap_ticks is None:
        cap_ticks = default_tick_cap(graph, eps, design)

    if protocol == "pairwise" and design.style in ("uniform-neighbor", "uniform-global"):
        hits, msgs = _pairwise_hit_times(graph, design, eps, trials, seed,
                                         cap_ticks, x0_vec)
    else:
        hits, msgs = _hit_times_serial(protocol, graph, design, eps, trials,
                                       seed, cap_ticks, x0_vec, gamma,
                                       bits_per_value)

    allowed = int(math.floor(eps * trials))
    order = np.sort(np.where(hits < 0, np.iinfo(np.int64).max, hits))
    t_star = order[trials - allowed - 1]
    converged = t_star < np.iinfo(np.int64).max
    reached = msgs[hits >= 0]
    return AveragingTimeResult(
        converged=bool(converged),
        t_ave=int(t_star) if converged else None,
        messages=float(np.median(reached)) if reached.size else None,
        eps=eps, trials=trials, cap_ticks=cap_ticks,
        hit_times=hits, messages_at_hit=msgs,
    )


def _pairwise_hit_times(graph, design, eps, trials, seed, cap, x0):
    """All trials advance in lockstep; one tick is a handful of array ops.

    The incremental deviation update is exact for a pair average and a
    self-pick is algebraically a no-op, so idle ticks need no masking.
    Accumulated float drift is squashed by a full recompute every n ticks.
    """
    n = graph.n
    deg = graph.degrees
    maxd = int(deg.max())
    nbr = np.zeros((n, maxd), dtype=np.int64)
    for i in range(n):
        nbr[i, : deg[i]] = graph.neighbors[i]
    global_style = design.style == "uniform-global"

    rng = np.random.default_rng([seed, trials])
    X = np.tile(x0, (trials, 1))
    a = float(x0.mean())
    norm0 = float(np.linalg.norm(x0)) or 1.0
    thr = (eps * norm0) ** 2
    s = ((X - a) ** 2).sum(axis=1)
    hits = np.full(trials, -1, dtype=np.int64)
    msg_at = np.full(trials, -1, dtype=np.int64)
    msgs = np.zeros(trials, dtype=np.int64)
    ar = np.arange(trials)
    resync = max(n, 64)

    fresh = s < thr
    hits[fresh] = 0
    msg_at[fresh] = 0

    t = 0
    block = 2048
    while t < cap and (hits < 0).any():
        steps = min(block, cap - t)
        I = rng.integers(0, n, size=(steps, trials))
        if global_style:
            J = rng.integers(0, n, size=(steps, trials))
        else:
            U = rng.random((steps, trials))
        for b in range(steps):
            t += 1
            i = I[b]
            if global_style:
                j = J[b]
                active = j != i
            else:
                j = nbr[i, np.minimum((U[b] * deg[i]).astype(np.int64), deg[i] - 1)]
                active = True
            xi = X[ar, i]
            xj = X[ar, j]
            m = 0.5 * (xi + xj)
            s += 2.0 * (m - a) ** 2 - (xi - a) ** 2 - (xj - a) ** 2
            X[ar, i] = m
            X[ar, j] = m
            if global_style:
                msgs += 2 * active
            else:
                msgs += 2
            if t % resync == 0:
                s = ((X - a) ** 2).sum(axis=1)
            fresh = (hits < 0) & (s < thr)
            if fresh.any():
                hits[fresh] = t
                msg_at[fresh] = msgs[fresh]
            if not (hits < 0).any():
                break
    return hits, msg_at


def _hit_times_serial(protocol, graph, design, eps, trials, seed, cap, x0,
                      gamma, bits_per_value):
    """One engine loop per trial, error recomputed each tick."""
    norm0 = float(np.linalg.norm(x0)) or 1.0
    a = float(x0.mean())
    thr = eps * norm0
    hits = np.full(trials, -1, dtype=np.int64)
    msg_at = np.full(trials, -1, dtype=np.int64)
    for k in range(trials):
        rng = np.random.default_rng([seed, k])
        proto = (make_protocol(protocol, graph, design, gamma, bits_per_value)
                 if isinstance(protocol, str) else protocol)
        state = GossipState(x=x0.copy())
        if float(np.linalg.norm(state.x - a)) < thr:
            hits[k] = 0
            msg_at[k] = 0
            continue
        for t in range(1, cap + 1):
            proto.step(state, rng)
            state.t = t
            if float(np.linalg.norm(state.x - a)) < thr:
                hits[k] = t
                msg_at[k] = state.messages
                break
    return hits, msg_at
