"""Translation between coarse observables and graph realizations.

Restriction maps graphs (or ensembles) to pooled degree distributions;
lifting goes the other way, via degree-sequence sampling plus Havel-Hakimi
for distributions, or independent Bernoulli edges for a bare edge density.
Percentile curves give a smooth, projectable representation of the
cumulative degree distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import _kernels
from .graphs import Graph, degree_sequence

__all__ = [
    "DegreeDistribution",
    "PercentileCurve",
    "LiftingError",
    "LiftResult",
    "restrict",
    "distribution_from_counts",
    "discretized_normal",
    "l1_distance",
    "to_percentile_curve",
    "from_percentile_curve",
    "repair_monotone",
    "sample_degree_sequence",
    "havel_hakimi",
    "erdos_gallai",
    "lift_distribution",
    "lift_density",
]

DEFAULT_RETRY_BUDGET = 1000


class LiftingError(RuntimeError):
    """Raised when a lifting operation exhausts its retry budget."""


@dataclass(frozen=True)
class DegreeDistribution:
    """Probability vector over degrees 0..n-1 (the coarse variable).

    Entries are clipped of tiny negative roundoff noise and renormalized
    so they sum to one exactly; anything materially off the simplex is
    rejected.
    """

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 1:
            raise ValueError("degree distribution must be a non-empty vector")
        if probs.min() < -1e-9:
            raise ValueError(f"negative probability {probs.min():.3e}")
        probs = np.clip(probs, 0.0, None)
        total = probs.sum()
        if not 1e-6 < total < 1e6 or abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {total:.8f}, expected 1")
        object.__setattr__(self, "probs", probs / total)

    @property
    def n(self) -> int:
        return self.probs.size

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def mean(self) -> float:
        return float(self.probs @ np.arange(self.n))

    def sd(self) -> float:
        d = np.arange(self.n)
        m = self.mean()
        return float(np.sqrt(self.probs @ (d - m) ** 2))


@dataclass(frozen=True)
class PercentileCurve:
    """Monotone pairs (p_i, g_i) inverting the cumulative degree distribution.

    g_i is the degree value at percentile p_i under the plateau
    interpolation convention (see to_percentile_curve).
    """

    percentiles: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.percentiles, dtype=np.float64)
        g = np.asarray(self.values, dtype=np.float64)
        if p.shape != g.shape or p.ndim != 1 or p.size < 2:
            raise ValueError("percentiles and values must be matching vectors")
        if np.any(np.diff(p) <= 0) or p[0] < 0 or p[-1] > 1:
            raise ValueError("percentiles must increase within [0, 1]")
        object.__setattr__(self, "percentiles", p)
        object.__setattr__(self, "values", g)

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) >= -1e-12))


def default_percentiles(count: int = 101) -> np.ndarray:
    return np.linspace(0.0, 1.0, count)


# -- restriction -----------------------------------------------------------


def restrict(graphs) -> DegreeDistribution:
    """Pooled normalized degree histogram of a graph ensemble."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("cannot restrict an empty ensemble")
    n = graphs[0].n
    counts = np.zeros(n, dtype=np.int64)
    for g in graphs:
        if g.n != n:
            raise ValueError("ensemble graphs must share a vertex count")
        counts += np.bincount(degree_sequence(g), minlength=n)
    return distribution_from_counts(counts)


def distribution_from_counts(counts: np.ndarray) -> DegreeDistribution:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("histogram is empty")
    return DegreeDistribution(counts / total)


def discretized_normal(mean: float, sd: float, n: int) -> DegreeDistribution:
    """Normal law discretized to integer degrees 0..n-1 via unit-bin mass."""
    if sd <= 0:
        raise ValueError("sd must be positive")
    edges = np.arange(n + 1) - 0.5
    cdf = ndtr((edges - mean) / sd)
    return DegreeDistribution(np.diff(cdf) / (cdf[-1] - cdf[0]))


def l1_distance(a: DegreeDistribution, b: DegreeDistribution) -> float:
    if a.n != b.n:
        raise ValueError("distributions live on different degree ranges")
    return float(np.abs(a.probs - b.probs).sum())


# -- percentile representation ---------------------------------------------


def _average_quantile(knots_p, knots_g, a: float, b: float) -> float:
    """Mean of the piecewise-linear quantile polyline over [a, b]."""
    inner = knots_p[(knots_p > a) & (knots_p < b)]
    xs = np.concatenate(([a], inner, [b]))
    ys = np.interp(xs, knots_p, knots_g)
    return float(np.trapezoid(ys, xs) / (b - a))


def _quantile_knots(mu: DegreeDistribution) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear quantile polyline of the interpolated distribution.

    Each positive-mass bin d contributes a flat plateau at value d holding
    the central 55% of its mass; the outer fractions form linear ramps to
    the neighboring bins. A point mass thus maps to a constant quantile,
    and mass differencing across half-integer cuts recovers smooth
    distributions with a small smoothing bias. The plateau fraction
    balances that bias against the sampling resolution of the 101-point
    percentile grid.
    """
    probs = mu.probs
    support = np.flatnonzero(probs > 0)
    if support.size == 0:
        raise ValueError("distribution has no mass")
    cum = np.cumsum(probs)
    lo = cum[support] - 0.775 * probs[support]
    hi = cum[support] - 0.225 * probs[support]
    knots_p = np.empty(2 * support.size)
    knots_p[0::2] = lo
    knots_p[1::2] = hi
    knots_g = np.repeat(support.astype(np.float64), 2)
    return knots_p, knots_g


def to_percentile_curve(
    mu: DegreeDistribution, percentiles: np.ndarray | None = None
) -> PercentileCurve:
    """Invert the cumulative distribution at uniform percentile points.

    g_i solves the interpolated CDF equation int_0^{g_i} mu = p_i under the
    plateau convention of _quantile_knots; the curve is non-decreasing with
    values in [0, n-1]. The uniform law on {0..9} has median 4.5 here.

    At p=0 and p=1 exactly, where the point quantile degenerates to the
    extreme support bins regardless of their mass, the curve instead stores
    the mean quantile over the outermost half-cell of the percentile grid;
    this keeps the round trip through from_percentile_curve faithful in the
    tails.
    """
    p = default_percentiles() if percentiles is None else np.asarray(percentiles)
    knots_p, knots_g = _quantile_knots(mu)
    g = np.interp(p, knots_p, knots_g)
    if p.size >= 2:
        full_p = np.concatenate(([0.0], knots_p, [1.0]))
        full_g = np.concatenate(([knots_g[0]], knots_g, [knots_g[-1]]))
        if p[0] == 0.0:
            g[0] = _average_quantile(full_p, full_g, 0.0, (p[1] - p[0]) / 2.0)
        if p[-1] == 1.0:
            g[-1] = _average_quantile(full_p, full_g, 1.0 - (p[-1] - p[-2]) / 2.0, 1.0)
    return PercentileCurve(p, g)


def _mass_below(curve: PercentileCurve, x: float) -> float:
    """P(g <= x) for the piecewise-linear quantile curve."""
    g = curve.values
    p = curve.percentiles
    j = int(np.searchsorted(g, x, side="right"))
    if j == 0:
        return 0.0
    if j == g.size:
        return 1.0
    # g[j-1] <= x < g[j], strict gap guaranteed by searchsorted side
    return float(p[j - 1] + (x - g[j - 1]) / (g[j] - g[j - 1]) * (p[j] - p[j - 1]))


def from_percentile_curve(curve: PercentileCurve, n: int) -> DegreeDistribution:
    """Recover a distribution on 0..n-1 by differencing the quantile curve.

    The mass of bin d is the percentile measure mapped into (d-1/2, d+1/2].
    Rejects non-monotone curves; repair with repair_monotone first.
    """
    if not curve.is_monotone():
        raise ValueError("percentile curve is not monotone; repair it first")
    g = np.clip(curve.values, 0.0, n - 1)
    clipped = PercentileCurve(curve.percentiles, g)
    cuts = np.array([_mass_below(clipped, d + 0.5) for d in range(n - 1)])
    probs = np.diff(np.concatenate(([0.0], cuts, [1.0])))
    return DegreeDistribution(probs)


def repair_monotone(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Isotonic non-decreasing projection (pool adjacent violators) + clip."""
    y = np.asarray(values, dtype=np.float64)
    means = y.copy()
    weights = np.ones_like(y)
    k = 0
    for i in range(1, y.size):
        k += 1
        means[k] = y[i]
        weights[k] = 1.0
        while k > 0 and means[k - 1] > means[k]:
            total = weights[k - 1] + weights[k]
            means[k - 1] = (weights[k - 1] * means[k - 1] + weights[k] * means[k]) / total
            weights[k - 1] = total
            k -= 1
    out = np.repeat(means[: k + 1], weights[: k + 1].astype(np.int64))
    return np.clip(out, lo, hi)


# -- degree sequences and Havel-Hakimi --------------------------------------


def sample_degree_sequence(
    mu: DegreeDistribution,
    n: int,
    rng: np.random.Generator,
    budget: int = DEFAULT_RETRY_BUDGET,
) -> np.ndarray:
    """n i.i.d. degree draws with whole-sequence resampling on odd sums."""
    cdf = mu.cdf()
    for _ in range(budget):
        degrees = np.searchsorted(cdf, rng.random(n), side="right")
        degrees = np.minimum(degrees, mu.n - 1)
        if degrees.sum() % 2 == 0:
            return degrees.astype(np.int64)
    raise LiftingError(
        f"no even-sum degree sequence in {budget} draws "
        f"(distribution mean {mu.mean():.3f}, n={n})"
    )


def _graph_from_buffers(n, adj, edge_stack, edge_pos, m) -> Graph:
    g = Graph.__new__(Graph)
    g.n = n
    g.adj = adj
    g.edge_stack = edge_stack
    g.edge_pos = edge_pos
    g.edge_count = int(m)
    return g


def havel_hakimi(degrees) -> Graph | None:
    """Realize a degree sequence as a simple graph, or None if not graphical."""
    degrees = np.asarray(degrees, dtype=np.int64)
    if degrees.ndim != 1 or degrees.size == 0:
        raise ValueError("degree sequence must be a non-empty vector")
    n = degrees.size
    adj = np.zeros((n, n), dtype=np.bool_)
    edge_stack = np.zeros((max(n * (n - 1) // 2, 1), 2), dtype=np.int32)
    edge_pos = np.full((n, n), -1, dtype=np.int32)
    m = _kernels.havel_hakimi_fill(degrees, adj, edge_stack, edge_pos)
    if m < 0:
        return None
    return _graph_from_buffers(n, adj, edge_stack, edge_pos, m)


def erdos_gallai(degrees) -> bool:
    """Graphicality test, independent of the Havel-Hakimi construction.

    A non-increasing sequence d_1 >= ... >= d_n of non-negative integers is
    graphical iff the sum is even and for every k
        sum_{i<=k} d_i <= k(k-1) + sum_{i>k} min(d_i, k).
    """
    d = np.sort(np.asarray(degrees, dtype=np.int64))[::-1]
    n = d.size
    if n == 0:
        raise ValueError("degree sequence must be non-empty")
    if d[-1] < 0 or d[0] >= n:
        return False
    if d.sum() % 2 == 1:
        return False
    prefix = np.cumsum(d)
    for k in range(1, n + 1):
        tail = d[k:]
        rhs = k * (k - 1) + np.minimum(tail, k).sum()
        if prefix[k - 1] > rhs:
            return False
    return True


@dataclass
class LiftResult:
    """Lifted ensemble plus per-copy resampling counts."""

    graphs: list = field(default_factory=list)
    retries: list = field(default_factory=list)


def lift_distribution(
    mu: DegreeDistribution,
    copies: int,
    rng: np.random.Generator,
    budget: int = DEFAULT_RETRY_BUDGET,
) -> LiftResult:
    """Build `copies` graphs realizing degree sequences sampled from mu.

    Non-graphical draws are resampled; exhausting the per-copy budget raises
    LiftingError.
    """
    if copies < 1:
        raise ValueError("copies must be >= 1")
    n = mu.n
    cdf = mu.cdf()
    result = LiftResult()
    for _ in range(copies):
        adj = np.zeros((n, n), dtype=np.bool_)
        edge_stack = np.zeros((n * (n - 1) // 2, 2), dtype=np.int32)
        edge_pos = np.full((n, n), -1, dtype=np.int32)
        m, retries = _kernels.sample_graphical_sequence(
            cdf, n, budget, rng, adj, edge_stack, edge_pos
        )
        if m < 0:
            raise LiftingError(
                f"no graphical sequence in {budget} draws "
                f"(distribution mean {mu.mean():.3f}, sd {mu.sd():.3f})"
            )
        result.graphs.append(_graph_from_buffers(n, adj, edge_stack, edge_pos, m))
        result.retries.append(retries)
    return result


def lift_density(rho: float, n: int, rng: np.random.Generator) -> Graph:
    """Erdos-Renyi graph G(n, rho): each edge present independently."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"edge density must be in [0, 1], got {rho}")
    iu, ju = np.triu_indices(n, k=1)
    present = rng.random(iu.size) < rho
    g = Graph(n)
    u_sel = iu[present].astype(np.int32)
    v_sel = ju[present].astype(np.int32)
    m = u_sel.size
    g.adj[u_sel, v_sel] = True
    g.adj[v_sel, u_sel] = True
    g.edge_stack[:m, 0] = u_sel
    g.edge_stack[:m, 1] = v_sel
    slots = np.arange(m, dtype=np.int32)
    g.edge_pos[u_sel, v_sel] = slots
    g.edge_pos[v_sel, u_sel] = slots
    g.edge_count = int(m)
    return g
