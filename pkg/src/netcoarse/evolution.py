"""The stochastic node-level evolution model and its trajectories.

One iteration of the chain: pick an unordered pair of distinct vertices
uniformly and add the edge if absent; then with probability r remove an
edge chosen uniformly from the current edge set (possibly the one just
added). Model time advances by 1/(iterations per unit); the unit is
either n iterations or C(n,2) iterations depending on the convention in
use, and both are supported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .graphs import (
    Graph,
    clustering_coefficients,
    count_cherries_triangles,
    degree_sequence,
    edge_density,
)

__all__ = [
    "ModelParams",
    "Snapshot",
    "Trajectory",
    "EnsembleResult",
    "child_rng",
    "step",
    "evolve",
    "run_trajectory",
    "run_ensemble",
]

TIME_UNITS = ("n", "pairs")


@dataclass(frozen=True)
class ModelParams:
    """Model parameters: vertex count, removal probability, seed, time unit.

    time_unit selects how many chain iterations make one unit of model
    time: "n" (n iterations) or "pairs" (C(n,2) iterations).
    """

    n: int
    r: float
    seed: int = 0
    time_unit: str = "n"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"r must be in [0, 1], got {self.r}")
        if self.time_unit not in TIME_UNITS:
            raise ValueError(f"time_unit must be one of {TIME_UNITS}")

    @property
    def iterations_per_unit(self) -> int:
        if self.time_unit == "n":
            return self.n
        return self.n * (self.n - 1) // 2

    def iterations(self, duration: float) -> int:
        """Chain iterations covering `duration` units of model time."""
        return int(round(duration * self.iterations_per_unit))


def child_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a labelled sub-stream of a master seed."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def step(g: Graph, params: ModelParams, rng: np.random.Generator) -> int:
    """One chain iteration in place; returns the edge-count change (-1/0/+1).

    Reference implementation with the same draw pattern as the compiled
    kernel: a generator in a given state produces the same evolution here
    and in evolve().
    """
    n = g.n
    before = g.edge_count
    u = int(rng.integers(0, n))
    v = int(rng.integers(0, n - 1))
    if v >= u:
        v += 1
    if not g.adj[u, v]:
        g.set_edge(u, v, True)
    if rng.random() < params.r and g.edge_count > 0:
        k = int(rng.integers(0, g.edge_count))
        a, b = g.edge_stack[k]
        g.set_edge(int(a), int(b), False)
    return g.edge_count - before


def evolve(g: Graph, params: ModelParams, duration: float, rng) -> None:
    """Advance the graph by `duration` model time units in place."""
    iters = params.iterations(duration)
    g.edge_count = int(
        _kernels.evolve_chain(
            g.adj, g.edge_stack, g.edge_pos, g.edge_count, iters, params.r, rng
        )
    )


@dataclass
class Snapshot:
    """Observed statistics of one graph at one model time."""

    time: float
    edge_count: int
    edge_density: float
    degrees: np.ndarray | None = None
    cherry_count: int | None = None
    triangle_count: int | None = None
    clustering: np.ndarray | None = None


@dataclass
class Trajectory:
    """Time-ordered snapshots of a single evolution run."""

    params: ModelParams
    times: np.ndarray = field(default_factory=lambda: np.array([]))
    snapshots: list = field(default_factory=list)

    def series(self, attr: str) -> np.ndarray:
        return np.array([getattr(s, attr) for s in self.snapshots])


@dataclass
class EnsembleResult:
    """Ensemble run output: pooled degree distributions and trajectories.

    pooled_counts[k] is the pooled degree histogram (counts) at times[k];
    pooled_probs normalizes each row. trajectories is empty when per-copy
    observations were not requested.
    """

    params: ModelParams
    copies: int
    times: np.ndarray
    pooled_counts: np.ndarray
    trajectories: list = field(default_factory=list)

    @property
    def pooled_probs(self) -> np.ndarray:
        totals = self.pooled_counts.sum(axis=1, keepdims=True)
        return self.pooled_counts / np.maximum(totals, 1)

    def mean_series(self, attr: str) -> np.ndarray:
        if not self.trajectories:
            raise ValueError("per-copy observers were not recorded")
        return np.mean([t.series(attr) for t in self.trajectories], axis=0)


VALID_OBSERVERS = ("degrees", "cherries_triangles", "clustering")


def _observe(g: Graph, t: float, observers) -> Snapshot:
    snap = Snapshot(time=t, edge_count=g.edge_count, edge_density=edge_density(g))
    if "degrees" in observers:
        snap.degrees = degree_sequence(g)
    if "cherries_triangles" in observers:
        snap.cherry_count, snap.triangle_count = count_cherries_triangles(g)
    if "clustering" in observers:
        snap.clustering = clustering_coefficients(g)
    return snap


def observation_times(t_end: float, observe_every: float) -> np.ndarray:
    """Times 0, observe_every, ..., t_end (t_end always included)."""
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    if t_end == 0:
        return np.array([0.0])
    if observe_every <= 0:
        raise ValueError("observe_every must be positive")
    k = int(np.floor(t_end / observe_every + 1e-9))
    times = np.arange(k + 1) * observe_every
    if times[-1] < t_end - 1e-9 * max(t_end, 1.0):
        times = np.append(times, t_end)
    return times


def _resolve_times(t_end, observe_every, times):
    if times is None:
        return observation_times(t_end, observe_every if t_end > 0 else 1.0)
    times = np.asarray(times, dtype=np.float64)
    if times.size < 1 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("explicit observation times must be increasing and >= 0")
    return times


def run_trajectory(
    g0: Graph,
    params: ModelParams,
    t_end: float,
    observe_every: float,
    observers=("degrees",),
    rng: np.random.Generator | None = None,
    times=None,
) -> Trajectory:
    """Evolve a copy of g0, recording snapshots on a uniform schedule
    (or at the explicit, increasing `times` when given).

    Deterministic given (params.seed, g0); pass an explicit generator to
    embed the run in a larger seeded experiment.
    """
    bad = set(observers) - set(VALID_OBSERVERS)
    if bad:
        raise ValueError(f"unknown observers {sorted(bad)}")
    if rng is None:
        rng = child_rng(params.seed, 0)
    g = g0.copy()
    times = _resolve_times(t_end, observe_every, times)
    iter_marks = [params.iterations(t) for t in times]
    snapshots = []
    if times[0] > 0:
        g.edge_count = int(
            _kernels.evolve_chain(
                g.adj, g.edge_stack, g.edge_pos, g.edge_count,
                iter_marks[0], params.r, rng,
            )
        )
    snapshots.append(_observe(g, times[0], observers))
    for k in range(1, len(times)):
        iters = iter_marks[k] - iter_marks[k - 1]
        g.edge_count = int(
            _kernels.evolve_chain(
                g.adj, g.edge_stack, g.edge_pos, g.edge_count, iters, params.r, rng
            )
        )
        snapshots.append(_observe(g, times[k], observers))
    return Trajectory(params=params, times=times, snapshots=snapshots)


def run_ensemble(
    g0_factory,
    params: ModelParams,
    copies: int,
    t_end: float,
    observe_every: float,
    observers=("degrees",),
    keep_trajectories: bool = True,
    spawn_key: tuple = (),
    times=None,
) -> EnsembleResult:
    """Run independent copies and pool their degree histograms per time.

    Each copy draws its randomness (initial condition and evolution) from
    an independent sub-stream of params.seed labelled by the copy index, so
    results do not depend on execution order. g0_factory(rng) builds one
    initial graph.
    """
    if copies < 1:
        raise ValueError("copies must be >= 1")
    if "degrees" not in observers:
        observers = ("degrees",) + tuple(observers)
    times = _resolve_times(t_end, observe_every, times)
    pooled = np.zeros((len(times), params.n), dtype=np.int64)
    trajectories = []
    for c in range(copies):
        rng = child_rng(params.seed, *spawn_key, c)
        g0 = g0_factory(rng)
        if g0.n != params.n:
            raise ValueError("g0_factory produced a graph with the wrong n")
        traj = run_trajectory(
            g0, params, t_end, observe_every, observers=observers, rng=rng,
            times=times,
        )
        for k, snap in enumerate(traj.snapshots):
            pooled[k] += np.bincount(snap.degrees, minlength=params.n)
        if keep_trajectories:
            trajectories.append(traj)
    return EnsembleResult(
        params=params,
        copies=copies,
        times=times,
        pooled_counts=pooled,
        trajectories=trajectories,
    )
