"""Consensus under quantized communication.

Fixed-rate uniform codecs (plain and dithered), exact integer splitting,
and two adaptive one-step codecs: a zooming uniform quantizer and a
logarithmic quantizer with bounded relative error. Asynchronous variants
ride the pairwise exchange; synchronous variants mix with a doubly
stochastic weight matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import GossipDesign, smallest_eigenvalue, uniform_design
from .topology import Graph, is_connected


@dataclass
class UniformQuantizer:
    """Midtread uniform quantizer, codes {0, +-d, ..., +-(2^(rate-1)-1) d}.

    Ties round half to even in units of delta. Inputs beyond the last
    level saturate silently; the saturations counter records how many
    times that happened so callers can inspect it.
    """

    delta: float
    rate: int
    saturations: int = 0

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError(f"need delta > 0, got {self.delta}")
        if self.rate < 2:
            raise ValueError(f"need rate >= 2, got {self.rate}")

    @property
    def max_code(self) -> int:
        return 2 ** (self.rate - 1) - 1

    @property
    def max_value(self) -> float:
        return self.max_code * self.delta

    def quantize(self, x):
        arr = np.asarray(x, dtype=float)
        k = np.round(arr / self.delta)
        clipped = np.clip(k, -self.max_code, self.max_code)
        self.saturations += int(np.count_nonzero(clipped != k))
        out = clipped * self.delta
        if arr.ndim == 0:
            return float(out)
        return out


def quantizer_for_range(value_range: float, levels: int) -> UniformQuantizer:
    """Quantizer with delta = range / levels and a rate wide enough that
    values inside [0, range] never saturate."""
    if value_range <= 0 or levels < 2:
        raise ValueError("need value_range > 0 and levels >= 2")
    delta = value_range / levels
    rate = math.ceil(math.log2(levels + 1)) + 1
    return UniformQuantizer(delta=delta, rate=rate)


def dithered_quantize(x, quantizer: UniformQuantizer, rng: np.random.Generator):
    """Quantize x + u with subtractive-free dither u ~ U[-delta/2, delta/2).

    The dither decorrelates the quantization error from the input; the
    output is unbiased for inputs away from saturation.
    """
    arr = np.asarray(x, dtype=float)
    u = rng.uniform(-quantizer.delta / 2.0, quantizer.delta / 2.0, size=arr.shape)
    return quantizer.quantize(arr + u)


def delta_upper_bound(W: np.ndarray) -> float:
    """Largest admissible relative precision for the logarithmic codec:
    (1 + lambda_min(W)) / (3 - lambda_min(W)) for the mixing matrix W."""
    lo = smallest_eigenvalue(np.asarray(W, dtype=float))
    return (1.0 + lo) / (3.0 - lo)


# ---------------------------------------------------------------------------
# integer consensus


def integer_pairwise_step(xi: int, xj: int, rng: np.random.Generator):
    """Split the pair sum into floor and ceil halves, order by coin flip.

    Conserves xi + xj exactly; an even sum needs no coin.
    """
    s = xi + xj
    half = s // 2
    if s % 2 == 0:
        return half, half
    if rng.random() < 0.5:
        return half, half + 1
    return half + 1, half


@dataclass
class IntegerConsensusResult:
    x: np.ndarray
    ticks: int
    messages: int
    converged: bool  # terminal spread <= 1
    spread: int


def run_integer_consensus(graph: Graph, x0, seed: int,
                          design: GossipDesign | None = None,
                          cap_ticks: int = 1_000_000,
                          check_every: int = 32) -> IntegerConsensusResult:
    """Asynchronous integer consensus to its absorbing band.

    Pairwise exchanges conserve the sum S exactly, so values herd into
    {floor(S/n), ceil(S/n)}; once the spread is at most 1 it stays there
    and the run stops.
    """
    if not is_connected(graph):
        raise ValueError("integer consensus needs a connected graph")
    x = np.asarray(x0)
    if x.shape != (graph.n,):
        raise ValueError(f"x0 must have shape ({graph.n},), got {x.shape}")
    if not np.issubdtype(x.dtype, np.integer):
        raise ValueError("integer consensus needs an integer initial vector")
    x = x.astype(np.int64)
    design = design if design is not None else uniform_design(graph)
    rng = np.random.default_rng(seed)
    n = graph.n
    messages = 0
    spread = int(x.max() - x.min())
    t = 0
    while spread > 1 and t < cap_ticks:
        t += 1
        i = int(rng.integers(n))
        j = design.sample_partner(i, rng)
        if j < 0:
            continue
        x[i], x[j] = integer_pairwise_step(int(x[i]), int(x[j]), rng)
        messages += 2
        if t % check_every == 0:
            spread = int(x.max() - x.min())
    spread = int(x.max() - x.min())
    return IntegerConsensusResult(x=x, ticks=t, messages=messages,
                                  converged=spread <= 1, spread=spread)


# ---------------------------------------------------------------------------
# adaptive codecs


@dataclass(frozen=True)
class ZoomState:
    """Shared encoder/decoder state of the zooming codec."""

    xhat: float = 0.0
    f: float = 1.0


def zoom_encode(x: float, state: ZoomState, quantizer: UniformQuantizer,
                k_in: float = 0.5, k_out: float = 2.0):
    """Quantize the innovation scaled by 1/f, then adapt the scale.

    code = uni((x - xhat) / f); the estimate moves to xhat + f * code.
    A code inside the unit range (|code| < 1) means the scale was ample,
    so it zooms in by k_in; otherwise it zooms out by k_out.
    """
    code = quantizer.quantize((x - state.xhat) / state.f)
    return code, zoom_decode(code, state, k_in, k_out)


def zoom_decode(code: float, state: ZoomState,
                k_in: float = 0.5, k_out: float = 2.0) -> ZoomState:
    """Advance a decoder replica; identical arithmetic to the encoder."""
    xhat = state.xhat + state.f * code
    f = state.f * (k_in if abs(code) < 1.0 else k_out)
    return ZoomState(xhat=xhat, f=f)


def log_quantize(e: float, delta: float) -> float:
    """Logarithmic quantizer with relative error at most delta.

    With rho = (1 + delta) / (1 - delta), the output is sign(e) * rho^l
    where l places |e| * rho^(-l) inside [1/(1+delta), 1/(1-delta)].
    Zero input takes the reserved zero code, so an exact match costs
    nothing and stays exact.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"need 0 < delta < 1, got {delta}")
    if e == 0.0:
        return 0.0
    rho = (1.0 + delta) / (1.0 - delta)
    level = math.floor((math.log(abs(e)) + math.log1p(delta)) / math.log(rho))
    return math.copysign(rho**level, e)


def _log_quantize_vec(e: np.ndarray, delta: float) -> np.ndarray:
    rho = (1.0 + delta) / (1.0 - delta)
    out = np.zeros_like(e)
    nz = e != 0.0
    if nz.any():
        level = np.floor((np.log(np.abs(e[nz])) + math.log1p(delta)) / math.log(rho))
        out[nz] = np.sign(e[nz]) * rho**level
    return out


@dataclass(frozen=True)
class LogState:
    """Decoder estimate tracked by the logarithmic codec."""

    xi: float = 0.0


def log_encode(x: float, state: LogState, delta: float):
    """One codec step: quantize the innovation, advance the estimate."""
    q = log_quantize(x - state.xi, delta)
    return q, LogState(xi=state.xi + q)


# ---------------------------------------------------------------------------
# synchronous rounds


@dataclass
class SyncResult:
    """Terminal state of a synchronous quantized-consensus run.

    stalled marks a frozen fixed point (the quantized vector repeated, so
    nothing will ever move again). deviation is max |x_i - mean(x0)|;
    bits_total covers fixed-rate codecs and is 0 where the alphabet is
    unbounded ("log", "none").
    """

    x: np.ndarray
    rounds: int
    stalled: bool
    spread: float
    deviation: float
    bits_total: int


def sync_quantized_consensus(W: np.ndarray, x0, codec: str = "uniform",
                             quantizer: UniformQuantizer | None = None,
                             delta: float | None = None,
                             rounds: int = 1000, tol: float | None = None,
                             seed: int = 0, k_in: float = 0.5,
                             k_out: float = 2.0) -> SyncResult:
    """Synchronous consensus rounds under a communication codec.

    codec selects what travels on the wire each round:
      "none"     x <- W x, the exact baseline.
      "uniform"  x <- W uni(x). Memoryless; can freeze at a fixed point
                 whose spread is far above one quantization step.
      "dither"   x <- W uni(x + u), fresh dither per round.
      "zoom"     difference form x <- x + (W - I) xhat with per-node
                 zooming codecs tracking xhat.
      "log"      same difference form with the logarithmic codec at
                 relative precision delta. Preserves the state sum
                 exactly and converges to the true initial average for
                 delta under the spectral bound.

    Stops early when the state freezes ("uniform"), or when
    max |x - mean(x0)| <= tol (difference-form codecs with tol set).
    """
    W = np.asarray(W, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    n = x.shape[0]
    if W.shape != (n, n):
        raise ValueError(f"W must be ({n}, {n}), got {W.shape}")
    if codec in ("uniform", "dither", "zoom") and quantizer is None:
        raise ValueError(f"codec {codec!r} needs a quantizer")
    if codec == "log" and delta is None:
        raise ValueError("codec 'log' needs delta")
    avg0 = float(x.mean())
    rng = np.random.default_rng(seed)
    stalled = False
    messages = 0
    r = 0

    if codec in ("uniform", "dither"):
        prev_q = None
        for r in range(1, rounds + 1):
            if codec == "uniform":
                q = quantizer.quantize(x)
            else:
                q = dithered_quantize(x, quantizer, rng)
            messages += n
            if codec == "uniform" and prev_q is not None and np.array_equal(q, prev_q):
                stalled = True  # x already equals W q, nothing will move
                break
            x = W @ q
            prev_q = q
    elif codec in ("zoom", "log"):
        xhat = np.zeros(n)
        fscale = np.ones(n)
        for r in range(1, rounds + 1):
            if codec == "zoom":
                code = quantizer.quantize((x - xhat) / fscale)
                xhat = xhat + fscale * code
                fscale = fscale * np.where(np.abs(code) < 1.0, k_in, k_out)
            else:
                q = _log_quantize_vec(x - xhat, delta)
                xhat = xhat + q
            messages += n
            x = x + (W @ xhat - xhat)
            if tol is not None and np.abs(x - avg0).max() <= tol:
                break
    elif codec == "none":
        for r in range(1, rounds + 1):
            x = W @ x
            if tol is not None and np.abs(x - avg0).max() <= tol:
                break
    else:
        raise ValueError(f"unknown codec {codec!r}")

    rate = quantizer.rate if quantizer is not None and codec != "none" else 0
    return SyncResult(
        x=x, rounds=r, stalled=stalled,
        spread=float(x.max() - x.min()),
        deviation=float(np.abs(x - avg0).max()),
        bits_total=messages * rate,
    )


# ---------------------------------------------------------------------------
# asynchronous pairwise variants


class QuantizedPairwise:
    """Pairwise exchange where the wire carries quantized values.

    Both endpoints set themselves to the mean of the two exchanged
    codes, so they leave the interaction in exact agreement. With dither
    the pair mean is unbiased and runs absorb at grid consensus; without
    it the consensus point inherits the quantizer's bias.
    """

    name = "quantized-pairwise"

    def __init__(self, graph: Graph, quantizer: UniformQuantizer,
                 design: GossipDesign | None = None, dither: bool = True):
        self.graph = graph
        self.quantizer = quantizer
        self.design = design if design is not None else uniform_design(graph)
        self.dither = dither

    def step(self, state, rng):
        i = int(rng.integers(self.graph.n))
        j = self.design.sample_partner(i, rng)
        if j < 0:
            return None
        if self.dither:
            qi = float(dithered_quantize(state.x[i], self.quantizer, rng))
            qj = float(dithered_quantize(state.x[j], self.quantizer, rng))
        else:
            qi = self.quantizer.quantize(state.x[i])
            qj = self.quantizer.quantize(state.x[j])
        m = 0.5 * (qi + qj)
        state.x[i] = m
        state.x[j] = m
        state.messages += 2
        state.bits += 2 * self.quantizer.rate
        return None


@dataclass
class AsyncQuantizedResult:
    x: np.ndarray
    ticks: int
    messages: int
    bits: int
    reached: bool  # spread within spread_tol before the cap
    spread: float
    deviation: float  # max |x_i - mean(x0)| at the end


def run_async_quantized(graph: Graph, x0, quantizer: UniformQuantizer,
                        seed: int, dither: bool = True,
                        design: GossipDesign | None = None,
                        cap_ticks: int = 200_000,
                        spread_tol: float | None = None,
                        check_every: int = 64) -> AsyncQuantizedResult:
    """Run quantized pairwise exchange until the spread collapses.

    Consensus here means max - min within spread_tol (default: one
    thousandth of a quantization step). The spread is polled every
    check_every ticks, so the reported tick count can overshoot the true
    absorption time by at most that much.
    """
    if not is_connected(graph):
        raise ValueError("quantized gossip needs a connected graph")
    if spread_tol is None:
        spread_tol = quantizer.delta * 1e-3
    from .engine import GossipState

    proto = QuantizedPairwise(graph, quantizer, design, dither)
    state = GossipState(x=np.asarray(x0, dtype=float).copy())
    avg0 = float(state.x.mean())
    rng = np.random.default_rng(seed)
    reached = bool(np.ptp(state.x) <= spread_tol)
    t = 0
    while not reached and t < cap_ticks:
        t += 1
        proto.step(state, rng)
        if t % check_every == 0:
            reached = bool(np.ptp(state.x) <= spread_tol)
    return AsyncQuantizedResult(
        x=state.x, ticks=t, messages=state.messages, bits=state.bits,
        reached=reached, spread=float(np.ptp(state.x)),
        deviation=float(np.abs(state.x - avg0).max()),
    )
