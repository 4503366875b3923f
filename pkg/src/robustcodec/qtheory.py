"""Minimax scalar quantization of uniform sources.

An N-level interval quantizer is described by adjacent cell lengths
``p_1..p_N`` starting at 0, each cell reproducing to its midpoint. Its
mean squared error on ``Unif(0, alpha)`` is ``D(alpha, Q)``. For the pair
of sources ``Unif(0, 1)`` and ``Unif(0, 1 + delta)`` with ``0 < delta < 1/N``
the worst-case distortion is ``V(Q) = max(D(1, Q), D(1 + delta, Q))``.

This module evaluates D in closed form and by quadrature, searches for the
minimax quantizer, and checks the resulting tradeoff: the minimax quantizer
pays strictly more on ``Unif(0, 1)`` than the uniform quantizer does.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import ConfigError, DomainError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IntervalQuantizer:
    lengths: tuple

    def __init__(self, lengths):
        arr = np.asarray(lengths, dtype=np.float64).reshape(-1)
        if arr.size < 1:
            raise ConfigError("an interval quantizer needs at least one cell")
        if not np.all(arr > 0) or not np.all(np.isfinite(arr)):
            raise ConfigError("cell lengths must be positive and finite")
        object.__setattr__(self, "lengths", tuple(float(v) for v in arr))

    @property
    def N(self) -> int:
        return len(self.lengths)

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.lengths)])

    @property
    def codewords(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def total(self) -> float:
        return float(np.sum(self.lengths))

    def __call__(self, x):
        """Quantize points of ``(0, inf)``; points past the last edge map
        to the last codeword."""
        x = np.asarray(x, dtype=np.float64)
        idx = np.searchsorted(self.edges[1:-1], x, side="right")
        return self.codewords[idx]


@dataclass(frozen=True)
class UniformPair:
    N: int
    delta: float

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if not 0 < self.delta < 1.0 / self.N:
            raise ConfigError(f"need 0 < delta < 1/N, got delta={self.delta}, N={self.N}")

    @property
    def alphas(self) -> tuple:
        return (1.0, 1.0 + self.delta)


def optimal_uniform(alpha: float, N: int) -> IntervalQuantizer:
    if not alpha > 0 or N < 1:
        raise DomainError("need alpha > 0 and N >= 1")
    return IntervalQuantizer(np.full(N, alpha / N))


def lower_bound(alpha: float, N: int) -> float:
    """alpha^2 / (12 N^2): attained only by the uniform partition."""
    return alpha * alpha / (12.0 * N * N)


def distortion_closed(alpha: float, q: IntervalQuantizer) -> float:
    """Closed-form D(alpha, Q).

    Cells lying completely inside (0, alpha) contribute ``p^3 / 12`` each
    (scaled by 1/alpha). The remaining part is either the stretch past the
    last edge, quantized to the last midpoint, or the partially covered
    cell K. With ``S_j`` the sum of the first j lengths:

    * alpha >= S_N:  [(alpha - S_{N-1} - p_N/2)^3 - (p_N/2)^3] / (3 alpha)
      + sum_{i<=N} p_i^3 / (12 alpha)
    * S_{K-1} <= alpha < S_K:  [(alpha - S_{K-1} - p_K/2)^3 + (p_K/2)^3] / (3 alpha)
      + sum_{i<K} p_i^3 / (12 alpha)

    The second case is only stated for K >= 2; alpha < p_1 falls back to
    quadrature.
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    p = np.asarray(q.lengths)
    S = np.concatenate([[0.0], np.cumsum(p)])
    N = p.size
    if alpha >= S[N]:
        half = 0.5 * p[-1]
        tail = (alpha - S[N - 1] - half) ** 3 - half ** 3
        return float(tail / (3 * alpha) + np.sum(p ** 3) / (12 * alpha))
    K = int(np.searchsorted(S, alpha, side="right"))  # S[K-1] <= alpha < S[K]
    if K < 2:
        log.warning("alpha=%g lies inside the first cell; using quadrature", alpha)
        return distortion_numeric(alpha, q)
    half = 0.5 * p[K - 1]
    part = (alpha - S[K - 1] - half) ** 3 + half ** 3
    return float(part / (3 * alpha) + np.sum(p[:K - 1] ** 3) / (12 * alpha))


def distortion_numeric(alpha: float, q: IntervalQuantizer, tol: float = 1e-11) -> float:
    """D(alpha, Q) by adaptive quadrature, one integral per cell piece."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    edges = q.edges
    cw = q.codewords
    total = 0.0
    for i in range(q.N):
        lo = min(edges[i], alpha)
        hi = alpha if i == q.N - 1 else min(edges[i + 1], alpha)
        if hi <= lo:
            continue
        c = cw[i]
        val, _ = integrate.quad(lambda x: (x - c) ** 2, lo, hi, epsabs=tol, epsrel=0.0)
        total += val
    return total / alpha


def distortion_batch(alpha: float, lengths) -> np.ndarray:
    """Vectorized closed form over rows of ``lengths`` (shape ``(M, N)``).

    Same expression as :func:`distortion_closed`, applied for every K
    including K = 1 (where it is still exact), so large searches never
    need quadrature.
    """
    p = np.atleast_2d(np.asarray(lengths, dtype=np.float64))
    S = np.cumsum(p, axis=1)
    start = S - p
    inside = S <= alpha
    # cell i is the partial (or overflow) cell if it starts at or before
    # alpha and either ends after alpha or is the last cell
    last = np.zeros_like(inside)
    last[:, -1] = True
    partial = (start <= alpha) & (~inside | last)
    half = 0.5 * p
    full = np.where(inside & ~last, p ** 3 / 12.0, 0.0).sum(axis=1)
    a = alpha - start - half
    # only one partial cell per row; last cell fully inside still uses the
    # tail expression, which reduces to p^3/12 + extra
    piece = np.where(partial, (a ** 3 + half ** 3) / 3.0, 0.0).sum(axis=1)
    return (full + piece) / alpha


def worst_case(q: IntervalQuantizer, pair: UniformPair) -> float:
    return max(distortion_closed(a, q) for a in pair.alphas)


def worst_case_batch(lengths, pair: UniformPair) -> np.ndarray:
    return np.maximum(distortion_batch(1.0, lengths), distortion_batch(1.0 + pair.delta, lengths))


# --- f1, f2: the two sides of the widened-vs-plain uniform comparison ------

def _f1(N, d):
    return (2 * N - (1 + d) * (2 * N - 1)) ** 3 + (2 * N - 1) * (1 + d) ** 3


def _f2(N, d):
    t = 1 + d
    return (t ** (2 / 3) * 2 * N - t ** (-1 / 3) * (2 * N - 1)) ** 3 + (2 * N - 1) / t


def _df1(N, d):
    return (-3 * (2 * N - (1 + d) * (2 * N - 1)) ** 2 * (2 * N - 1)
            + 3 * (2 * N - 1) * (1 + d) ** 2)


def _df2(N, d):
    t = 1 + d
    base = t ** (2 / 3) * 2 * N - t ** (-1 / 3) * (2 * N - 1)
    return (base ** 2 * (4 * N * t ** (-1 / 3) + t ** (-4 / 3) * (2 * N - 1))
            - (2 * N - 1) * t ** -2)


@dataclass
class F1F2:
    N: int
    delta: float
    f1: float
    f2: float
    df1: float  # analytic derivatives
    df2: float
    df1_fd: float  # central finite differences
    df2_fd: float

    @property
    def d1_of_opt_1pd(self) -> float:
        """D(1, Q_{p*(1+delta)}) = f1 / (24 N^3)."""
        return self.f1 / (24.0 * self.N ** 3)

    @property
    def d1pd_of_opt_1(self) -> float:
        """D(1 + delta, Q_{p*(1)}) = f2 / (24 N^3)."""
        return self.f2 / (24.0 * self.N ** 3)


def f1_f2(N: int, delta: float, h: float = 1e-6) -> F1F2:
    if N < 1:
        raise DomainError("N must be >= 1")
    if not 0 <= delta <= 1.0 / N:
        raise DomainError(f"delta must lie in [0, 1/N], got {delta}")
    fd1 = (_f1(N, delta + h) - _f1(N, delta - h)) / (2 * h)
    fd2 = (_f2(N, delta + h) - _f2(N, delta - h)) / (2 * h)
    return F1F2(N, delta, _f1(N, delta), _f2(N, delta), _df1(N, delta), _df2(N, delta), fd1, fd2)


# --- minimax search ----------------------------------------------------------

@dataclass
class MinimaxResult:
    quantizer: IntervalQuantizer
    V: float
    starts: list = field(default_factory=list)  # (start lengths, V after simplex)


def _refine_grid(lengths, pair, scales=(1e-3, 1e-4, 1e-5, 1e-6, 1e-7), span=5, max_rounds=50):
    """Pattern refinement on a dense local grid around ``lengths``.

    Small N use the full product grid; larger N move one coordinate at a time.
    """
    best = np.asarray(lengths, dtype=np.float64)
    bestV = worst_case_batch(best, pair)[0]
    N = best.size
    offsets = np.arange(-span, span + 1)
    for s in scales:
        for _ in range(max_rounds):
            if N <= 3:
                steps = np.array(list(itertools.product(offsets, repeat=N)), dtype=np.float64) * s
            else:
                steps = np.zeros((N * offsets.size, N))
                for i in range(N):
                    steps[i * offsets.size:(i + 1) * offsets.size, i] = offsets * s
            cand = best + steps
            cand = cand[np.all(cand > 0, axis=1)]
            V = worst_case_batch(cand, pair)
            k = int(np.argmin(V))
            if V[k] < bestV:
                best, bestV = cand[k], V[k]
            else:
                break
    return best, float(bestV)


def minimax_search(pair: UniformPair, n_random: int = 8, seed: int = 0,
                   refine: bool = True) -> MinimaxResult:
    """Minimize V over length vectors.

    Nelder-Mead runs on log-lengths from several starts (both individually
    optimal quantizers, their average, and random positive vectors), and
    the best point is polished on a shrinking local grid.
    """
    N = pair.N
    rng = np.random.default_rng(seed)
    starts = [np.full(N, 1.0 / N), np.full(N, (1.0 + pair.delta) / N),
              np.full(N, (1.0 + 0.5 * pair.delta) / N)]
    for _ in range(n_random):
        starts.append(rng.dirichlet(np.ones(N)) * rng.uniform(1.0, 1.0 + pair.delta))

    def objective(logp):
        return float(worst_case_batch(np.exp(logp), pair)[0])

    results = []
    best_p, best_V = None, np.inf
    for s in starts:
        V0 = objective(np.log(s))
        res = optimize.minimize(objective, np.log(s), method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-16,
                                         "maxiter": 4000 * N, "maxfev": 8000 * N})
        p, V = np.exp(res.x), float(res.fun)
        if V0 < V:  # keep the start itself if the simplex wandered off
            p, V = np.asarray(s, dtype=np.float64), V0
        results.append((tuple(float(v) for v in s), V))
        if V < best_V:
            best_p, best_V = p, V
    if refine:
        best_p, best_V = _refine_grid(best_p, pair)
    return MinimaxResult(IntervalQuantizer(best_p), best_V, results)


def exhaustive_grid(pair: UniformPair, resolution: float = 1e-4, upper: float | None = None,
                    chunk: int = 256):
    """Brute force over every length vector on a grid ``resolution * k``,
    ``k = 1..upper/resolution`` per coordinate.

    Returns ``(lengths, V)`` of the grid minimizer (first on ties). Feasible
    for N = 2 at fine resolution; cost grows as (upper/resolution)^N.
    """
    if upper is None:
        upper = 1.0 + pair.delta
    M = int(round(upper / resolution))
    axis = resolution * np.arange(1, M + 1, dtype=np.float64)
    N = pair.N
    if N == 1:
        V = worst_case_batch(axis[:, None], pair)
        k = int(np.argmin(V))
        return np.array([axis[k]]), float(V[k])
    best_V, best_p = np.inf, None
    tail = np.array(list(itertools.product(range(M), repeat=N - 2)), dtype=np.int64) \
        if N > 2 else np.zeros((1, 0), dtype=np.int64)
    a1 = 1.0
    a2 = 1.0 + pair.delta
    for t in tail:
        rest = axis[t] if t.size else np.zeros(0)
        for i0 in range(0, M, chunk):
            p1 = axis[i0:i0 + chunk, None]
            p2 = axis[None, :]
            # rows index the first length, columns the second; trailing
            # lengths fixed for this block
            lengths = _block_lengths(p1, p2, rest)
            V = np.maximum(_block_distortion(a1, lengths), _block_distortion(a2, lengths))
            k = int(np.argmin(V))
            if V.flat[k] < best_V:
                r, c = divmod(k, M)
                best_V = float(V.flat[k])
                best_p = np.concatenate([[p1[r, 0], axis[c]], rest])
    return best_p, best_V


def _block_lengths(p1, p2, rest):
    shape = np.broadcast_shapes(p1.shape, p2.shape)
    cols = [np.broadcast_to(p1, shape), np.broadcast_to(p2, shape)]
    cols += [np.full(shape, v) for v in rest]
    return cols


def _block_distortion(alpha, cols):
    # distortion_batch on a grid block without materializing an (M*M, N) array
    total = np.zeros(cols[0].shape)
    start = np.zeros(cols[0].shape)
    n = len(cols)
    for i, p in enumerate(cols):
        end = start + p
        half = 0.5 * p
        if i < n - 1:
            inside = end <= alpha
            a = np.minimum(alpha, end) - start - half
            contrib = np.where(start <= alpha, (a ** 3 + half ** 3) / 3.0, 0.0)
            total += np.where(inside, p ** 3 / 12.0, contrib)
        else:
            a = alpha - start - half
            total += np.where(start <= alpha, (a ** 3 + half ** 3) / 3.0, 0.0)
        start = end
    return total / alpha


@dataclass
class TheoremReport:
    N: int
    delta: float
    D_1_opt: float  # D(1, Q_{p*(1)})
    D_1_minimax: float  # D(1, Q*)
    V_opt1: float  # V(Q_{p*(1)})
    V_opt1pd: float  # V(Q_{p*(1+delta)})
    V_minimax: float
    minimax_lengths: tuple
    widening_margin: float  # V_opt1 - V_opt1pd
    chain_margin: float  # D(1+delta, Q_{p*(1)}) - D(1, Q_{p*(1+delta)})

    @property
    def margin(self) -> float:
        return self.D_1_minimax - self.D_1_opt

    @property
    def holds(self) -> bool:
        return self.margin > 0 and self.widening_margin > 1e-12 and self.chain_margin > 0

    def row(self) -> dict:
        return {"N": self.N, "delta": self.delta, "D_1_opt": self.D_1_opt,
                "D_1_minimax": self.D_1_minimax, "V_opt1": self.V_opt1,
                "V_opt1pd": self.V_opt1pd, "V_minimax": self.V_minimax,
                "margin": self.margin}


class TheoryViolation(AssertionError):
    def __init__(self, report: TheoremReport):
        super().__init__(f"tradeoff check failed: {report}")
        self.report = report


def verify_theorem1(pair: UniformPair, result: MinimaxResult | None = None,
                    strict: bool = True) -> TheoremReport:
    """Check that the minimax quantizer is strictly worse on Unif(0, 1)
    than the uniform quantizer, together with the two inequalities
    that make the widened uniform quantizer the better worst case."""
    if result is None:
        result = minimax_search(pair)
    N, d = pair.N, pair.delta
    q1 = optimal_uniform(1.0, N)
    q1d = optimal_uniform(1.0 + d, N)
    d1_q1d = distortion_closed(1.0, q1d)
    d1d_q1 = distortion_closed(1.0 + d, q1)
    report = TheoremReport(
        N=N, delta=d,
        D_1_opt=distortion_closed(1.0, q1),
        D_1_minimax=distortion_closed(1.0, result.quantizer),
        V_opt1=worst_case(q1, pair),
        V_opt1pd=worst_case(q1d, pair),
        V_minimax=result.V,
        minimax_lengths=result.quantizer.lengths,
        widening_margin=worst_case(q1, pair) - worst_case(q1d, pair),
        chain_margin=d1d_q1 - d1_q1d,
    )
    if strict and not report.holds:
        raise TheoryViolation(report)
    return report
