"""Empirical validation tools: rate fits, PCA of distribution decay,
eigenfunction shape matching, and the canned convergence-rate experiments.

The three rate experiments reproduce the slow/fast time-scale hierarchy of
the model: per-vertex degree deviations decay at 1/(1-r), cherry counts
approach their density-slaved values at 2/(1-r), and triangle counts of two
ensembles with matched degree statistics approach each other at 3/(1-r)
(time measured in C(n,2)-iteration units).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evolution import ModelParams, child_rng, run_ensemble, run_trajectory
from .graphs import Graph, degree_sequence
from .liftrestrict import (
    DegreeDistribution,
    discretized_normal,
    distribution_from_counts,
    havel_hakimi,
    lift_density,
    lift_distribution,
)
from .theory import TheoryParams, fokker_planck_eigenfunctions

__all__ = [
    "RateFitResult",
    "PcaResult",
    "ShapeMatch",
    "RateExperiment",
    "PcaExperiment",
    "observable_trace",
    "estimate_rate",
    "pca_decay",
    "hermite_shape_match",
    "degree_rate_experiment",
    "cherry_rate_experiment",
    "triangle_rate_experiment",
    "stationary_estimate",
    "pca_decay_experiment",
    "slaved_cherry_count",
    "load_trajectory_csv",
]


# -- observables -------------------------------------------------------------


def observable_trace(trajectory, observable: str):
    """Time series of a scalar graph statistic from trajectory snapshots.

    observable is one of "snd" (sum of squared normed degrees),
    "cherry_count", "triangle_count", or "relative_triangles"; the last
    takes a pair (trajectory_a, trajectory_b) with matching observation
    times and returns |N_T,a(t) - N_T,b(t)|.
    """
    if observable == "relative_triangles":
        traj_a, traj_b = trajectory
        if len(traj_a.times) != len(traj_b.times) or not np.allclose(
            traj_a.times, traj_b.times
        ):
            raise ValueError("paired trajectories must share observation times")
        diff = traj_a.series("triangle_count") - traj_b.series("triangle_count")
        return traj_a.times, np.abs(diff)
    if observable == "snd":
        n = trajectory.params.n
        values = np.array(
            [((s.degrees / n) ** 2).sum() for s in trajectory.snapshots]
        )
        return trajectory.times, values
    if observable in ("cherry_count", "triangle_count"):
        return trajectory.times, trajectory.series(observable)
    raise ValueError(f"unknown observable {observable!r}")


# -- rate estimation ----------------------------------------------------------


@dataclass
class RateFitResult:
    """Least-squares fit of log|deviation| against time."""

    slope: float
    intercept: float
    t_lo: float
    t_hi: float
    r_squared: float
    n_points: int


def estimate_rate(
    times,
    values,
    asymptote=0.0,
    window: tuple | None = None,
    floor_factor: float = 3.0,
    tail_fraction: float = 0.1,
) -> RateFitResult:
    """Fit the exponential decay rate of |values - asymptote|.

    The stochastic noise floor is estimated as the median deviation over
    the final `tail_fraction` of the time span; points below floor_factor
    times that floor are excluded unless the series never decayed below
    half its maximum (noiseless slow decays keep all their points).
    """
    times = np.asarray(times, dtype=np.float64)
    dev = np.abs(np.asarray(values, dtype=np.float64) - asymptote)
    if times.shape != dev.shape:
        raise ValueError("times and values must align")
    span = times[-1] - times[0]
    tail = times >= times[-1] - tail_fraction * span
    floor = float(np.median(dev[tail]))
    keep = dev > 0
    keep &= (dev > floor_factor * floor) | (dev >= 0.5 * dev.max())
    if window is not None:
        keep &= (times >= window[0]) & (times <= window[1])
    if keep.sum() < 3:
        raise ValueError(
            f"only {int(keep.sum())} usable points above the noise floor"
        )
    t, y = times[keep], np.log(dev[keep])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    total = y - y.mean()
    ss_tot = float(total @ total)
    r_squared = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return RateFitResult(
        slope=float(slope),
        intercept=float(intercept),
        t_lo=float(t.min()),
        t_hi=float(t.max()),
        r_squared=r_squared,
        n_points=int(keep.sum()),
    )


# -- PCA of distribution decay --------------------------------------------------


@dataclass
class PcaResult:
    """SVD of the deviation matrix (rows = times, columns = degrees)."""

    singular_values: np.ndarray
    components: np.ndarray

    def ratio(self) -> float:
        return float(self.singular_values[1] / self.singular_values[0])


def pca_decay(snapshots, mu_inf) -> PcaResult:
    """Singular value decomposition of mu(t) - mu_inf, no extra centering.

    Components come back unit-norm with the largest-magnitude entry
    positive; singular values are non-increasing.
    """
    if isinstance(mu_inf, DegreeDistribution):
        mu_inf = mu_inf.probs
    rows = [
        s.probs if isinstance(s, DegreeDistribution) else np.asarray(s)
        for s in snapshots
    ]
    if len(rows) < 3:
        raise ValueError("need at least 3 snapshots")
    dev = np.vstack(rows) - mu_inf
    if not dev.any():
        raise ValueError("deviation matrix is identically zero")
    _, svals, vt = np.linalg.svd(dev, full_matrices=False)
    comps = vt.copy()
    for k in range(comps.shape[0]):
        peak = np.argmax(np.abs(comps[k]))
        if comps[k, peak] < 0:
            comps[k] = -comps[k]
    return PcaResult(singular_values=svals, components=comps)


# -- eigenfunction shape matching ------------------------------------------------


@dataclass
class ShapeMatch:
    shift: float
    scale: float
    correlation: float


def _correlation(a: np.ndarray, b: np.ndarray) -> float:
    sa, sb = a.std(), b.std()
    if sa <= 0 or sb <= 0 or not np.isfinite(sb):
        return 0.0
    return float(((a - a.mean()) @ (b - b.mean())) / (a.size * sa * sb))


def hermite_shape_match(
    component: np.ndarray, p: TheoryParams, n: int, mode: int
) -> ShapeMatch:
    """Best shift/scale of Fokker-Planck eigenfunction `mode` (1 or 2)
    against a component over the degree axis, by absolute Pearson
    correlation. Grid search with two zoom refinements.
    """
    if mode not in (1, 2):
        raise ValueError("mode must be 1 or 2")
    component = np.asarray(component, dtype=np.float64)
    d = np.arange(n, dtype=np.float64)

    def corr_at(shift, scale):
        f = fokker_planck_eigenfunctions(p, (d - shift) / scale)[mode][1]
        return abs(_correlation(component, f))

    shifts = np.linspace(0.0, n - 1.0, 61)
    scales = np.geomspace(1.0, max(n / 2.0, 2.0), 41)
    best = (0.0, shifts[0], scales[0])
    for sh in shifts:
        for sc in scales:
            c = corr_at(sh, sc)
            if c > best[0]:
                best = (c, sh, sc)
    d_sh = shifts[1] - shifts[0]
    for _ in range(2):
        _, sh0, sc0 = best
        for sh in np.linspace(sh0 - d_sh, sh0 + d_sh, 21):
            for sc in np.geomspace(sc0 * 0.8, sc0 * 1.25, 21):
                c = corr_at(sh, sc)
                if c > best[0]:
                    best = (c, sh, sc)
        d_sh *= 0.2
    corr, shift, scale = best
    return ShapeMatch(shift=float(shift), scale=float(scale), correlation=corr)


# -- canned convergence-rate experiments -------------------------------------------


@dataclass
class RateExperiment:
    """Deviation trace and fitted decay rate for one protocol."""

    name: str
    times: np.ndarray
    deviation: np.ndarray
    fit: RateFitResult
    theory_rate: float
    details: dict = field(default_factory=dict)


def slaved_cherry_count(n: int, rho) -> np.ndarray:
    """Expected cherry count of G(n, rho): n C(n-1, 2) rho^2."""
    return n * ((n - 1) * (n - 2) / 2) * np.asarray(rho) ** 2


def _normal_degree_factory(mu0: DegreeDistribution):
    def factory(rng):
        return lift_distribution(mu0, 1, rng).graphs[0]

    return factory


def degree_rate_experiment(
    n: int = 100,
    r: float = 0.9,
    seed: int = 0,
    copies: int = 200,
    t_end: float = 0.3,
    observe_every: float = 0.01,
    window: tuple = (0.0, 0.3),
) -> RateExperiment:
    """Per-vertex degree relaxation at rate 1/(1-r).

    Initial graphs realize degree sequences drawn from a discretized
    Normal(10, 1) (stationary mean degree, much narrower spread). The
    fitted quantity projects the current centered normed degrees onto the
    initial ones, ensemble averaged; its t=0 value is the sum of squares
    of the centered normed degree sequence, and its mean decays at the
    single-vertex rate because the projection weights are fixed.
    """
    params = ModelParams(n=n, r=r, seed=seed, time_unit="pairs")
    mu0 = discretized_normal(10.0 * n / 100.0, 1.0, n)
    res = run_ensemble(
        _normal_degree_factory(mu0),
        params,
        copies,
        t_end,
        observe_every,
        observers=("degrees",),
    )
    deg = np.array(
        [[s.degrees for s in t.snapshots] for t in res.trajectories], dtype=float
    )
    normed = deg / n
    centered = normed - normed.mean(axis=2, keepdims=True)
    weights = centered[:, 0, :]
    proj = (weights[:, None, :] * centered).sum(axis=2).mean(axis=0)
    fit = estimate_rate(res.times, proj, window=window)
    return RateExperiment(
        name="degree",
        times=res.times,
        deviation=np.abs(proj),
        fit=fit,
        theory_rate=1.0 / (1.0 - r),
        details={"copies": copies, "initial": "lifted Normal(10,1) degrees"},
    )


def cherry_rate_experiment(
    n: int = 100,
    r: float = 0.9,
    seed: int = 0,
    copies: int = 200,
    t_end: float = 0.2,
    observe_every: float = 0.005,
    window: tuple = (0.0, 0.2),
) -> RateExperiment:
    """Cherry-count relaxation onto its density-slaved value at rate 2/(1-r).

    Same initial ensembles as the degree experiment; the reference
    subtracted at each time is the expected cherry count of an ER graph at
    the ensemble's measured edge density, which removes the slow
    edge-density mode from the trace.
    """
    params = ModelParams(n=n, r=r, seed=seed, time_unit="pairs")
    mu0 = discretized_normal(10.0 * n / 100.0, 1.0, n)
    res = run_ensemble(
        _normal_degree_factory(mu0),
        params,
        copies,
        t_end,
        observe_every,
        observers=("degrees", "cherries_triangles"),
    )
    nch = np.array(
        [t.series("cherry_count") for t in res.trajectories], dtype=float
    ).mean(axis=0)
    rho = np.array(
        [t.series("edge_density") for t in res.trajectories], dtype=float
    ).mean(axis=0)
    deviation = nch - slaved_cherry_count(n, rho)
    fit = estimate_rate(res.times, deviation, window=window)
    return RateExperiment(
        name="cherry",
        times=res.times,
        deviation=np.abs(deviation),
        fit=fit,
        theory_rate=2.0 / (1.0 - r),
        details={"copies": copies, "reference": "ER cherry count at measured rho"},
    )


def triangle_rate_experiment(
    n: int = 100,
    r: float = 0.9,
    seed: int = 0,
    copies: int = 200,
    p_init: float = 0.1,
    t_end: float = 0.25,
    observe_every: float = 0.005,
    window: tuple = (0.0, 0.25),
) -> RateExperiment:
    """Relative triangle count between matched ensembles at rate 3/(1-r).

    Ensemble A starts from ER(p_init); ensemble B realizes the same
    per-copy degree sequences through Havel-Hakimi, so edge and cherry
    statistics match while triangle counts differ. The fitted quantity is
    |mean N_T,A(t) - mean N_T,B(t)|.
    """
    params_a = ModelParams(n=n, r=r, seed=seed, time_unit="pairs")
    params_b = ModelParams(n=n, r=r, seed=seed, time_unit="pairs")
    sum_a = sum_b = None
    times = None
    for c in range(copies):
        g_a = lift_density(p_init, n, child_rng(seed, 1, c))
        g_b = havel_hakimi(degree_sequence(g_a))
        traj_a = run_trajectory(
            g_a,
            params_a,
            t_end,
            observe_every,
            observers=("cherries_triangles",),
            rng=child_rng(seed, 2, c),
        )
        traj_b = run_trajectory(
            g_b,
            params_b,
            t_end,
            observe_every,
            observers=("cherries_triangles",),
            rng=child_rng(seed, 3, c),
        )
        nt_a = traj_a.series("triangle_count").astype(float)
        nt_b = traj_b.series("triangle_count").astype(float)
        if sum_a is None:
            sum_a, sum_b, times = nt_a, nt_b, traj_a.times
        else:
            sum_a += nt_a
            sum_b += nt_b
    deviation = (sum_a - sum_b) / copies
    fit = estimate_rate(times, deviation, window=window)
    return RateExperiment(
        name="triangle",
        times=times,
        deviation=np.abs(deviation),
        fit=fit,
        theory_rate=3.0 / (1.0 - r),
        details={"copies": copies, "pairing": "ER vs Havel-Hakimi, same degrees"},
    )


# -- stationary state and PCA experiment ---------------------------------------------


@dataclass
class StationaryEstimate:
    distribution: DegreeDistribution
    mean: float
    sd: float
    skewness: float
    rho_mean: float


def stationary_estimate(
    n: int = 100,
    r: float = 0.9,
    seed: int = 0,
    copies: int = 100,
    burn: float = 8.0,
    duration: float = 4.0,
    observe_every: float = 0.5,
) -> StationaryEstimate:
    """Long-run pooled degree distribution and its moments.

    Runs `copies` chains from empty graphs for burn+duration time units
    (pairs convention) and pools the degree histograms observed after the
    burn-in window.
    """
    params = ModelParams(n=n, r=r, seed=seed, time_unit="pairs")
    res = run_ensemble(
        lambda rng: Graph(n),
        params,
        copies,
        burn + duration,
        observe_every,
        observers=("degrees",),
        keep_trajectories=True,
    )
    late = res.times >= burn - 1e-9
    counts = res.pooled_counts[late].sum(axis=0)
    mu = distribution_from_counts(counts)
    d = np.arange(n, dtype=np.float64)
    mean = float(mu.probs @ d)
    var = float(mu.probs @ (d - mean) ** 2)
    sd = float(np.sqrt(var))
    skew = float(mu.probs @ (d - mean) ** 3 / sd**3) if sd > 0 else 0.0
    rho = np.array([t.series("edge_density") for t in res.trajectories])
    rho_mean = float(rho[:, late].mean())
    return StationaryEstimate(
        distribution=mu, mean=mean, sd=sd, skewness=skew, rho_mean=rho_mean
    )


@dataclass
class PcaExperiment:
    result: PcaResult
    times: np.ndarray
    mu_inf: DegreeDistribution
    match_first: ShapeMatch
    match_second: ShapeMatch


def pca_decay_experiment(
    n: int = 100,
    r: float = 0.9,
    seed: int = 0,
    copies: int = 20000,
    mean_offset: float = 0.27,
    sd0: float = 3.0,
    decay_window: tuple = (0.15, 0.6),
    observe_every: float = 0.025,
    reference_window: tuple = (2.5, 4.0),
    reference_every: float = 0.25,
    smooth_sd: float = 1.2,
) -> PcaExperiment:
    """PCA of the degree-distribution decay to its steady state.

    Initial ensembles are lifted from a discretized normal with the
    stationary mean degree shifted by `mean_offset`. The pooled
    distribution (lightly kernel-smoothed, as for plotting) is observed
    densely inside decay_window and sparsely inside reference_window,
    whose time average provides the steady-state reference free of
    parametric bias. Observations start only after a short healing burn:
    freshly lifted realizations carry a fast equilibration transient that
    would otherwise masquerade as a leading decay mode. The two leading
    components are then matched against the first two Fokker-Planck
    eigenfunctions by shift/rescale.
    """
    if decay_window[0] <= 0:
        raise ValueError("decay window must start after the healing burn")
    params = ModelParams(n=n, r=r, seed=seed, time_unit="pairs")
    stationary_mean = (n - 1) * (1.0 - r)
    mu0 = discretized_normal(stationary_mean + mean_offset, sd0, n)
    t_decay = np.arange(decay_window[0], decay_window[1] + 1e-9, observe_every)
    t_ref = np.arange(
        reference_window[0], reference_window[1] + 1e-9, reference_every
    )
    times = np.concatenate([t_decay, t_ref])
    res = run_ensemble(
        _normal_degree_factory(mu0),
        params,
        copies,
        times[-1],
        observe_every,
        observers=("degrees",),
        keep_trajectories=False,
        times=times,
    )
    probs = res.pooled_probs
    if smooth_sd > 0:
        probs = _smooth_rows(probs, smooth_sd)
    early = res.times <= decay_window[1] + 1e-9
    ref_sel = res.times >= reference_window[0] - 1e-9
    mu_inf_row = probs[ref_sel].mean(axis=0)
    mu_inf = DegreeDistribution(mu_inf_row / mu_inf_row.sum())
    pca = pca_decay(list(probs[early]), mu_inf)
    theory = TheoryParams(r=r)
    match1 = hermite_shape_match(pca.components[0], theory, n, mode=1)
    match2 = hermite_shape_match(pca.components[1], theory, n, mode=2)
    return PcaExperiment(
        result=pca,
        times=res.times[early],
        mu_inf=mu_inf,
        match_first=match1,
        match_second=match2,
    )


def load_trajectory_csv(path) -> dict:
    """Read a trajectory export (time, copy, edge_density, cherry_count,
    triangle_count) back into per-copy series.

    Returns {"times": (T,) array, "edge_density"/"cherry_count"/
    "triangle_count": (copies, T) arrays}, matching the CSV the simulate
    subcommand and the evolution exporters write.
    """
    import csv as _csv

    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = _csv.DictReader(fh)
        for row in reader:
            rows.append(row)
    if not rows:
        raise ValueError(f"no data rows in {path}")
    copies = sorted({int(r["copy"]) for r in rows})
    times = sorted({float(r["time"]) for r in rows})
    t_index = {t: k for k, t in enumerate(times)}
    out = {
        "times": np.array(times),
        "edge_density": np.full((len(copies), len(times)), np.nan),
        "cherry_count": np.full((len(copies), len(times)), np.nan),
        "triangle_count": np.full((len(copies), len(times)), np.nan),
    }
    for row in rows:
        c = int(row["copy"])
        k = t_index[float(row["time"])]
        for key in ("edge_density", "cherry_count", "triangle_count"):
            if row.get(key) not in (None, ""):
                out[key][c, k] = float(row[key])
    return out


def _smooth_rows(rows: np.ndarray, kernel_sd: float) -> np.ndarray:
    """Gaussian smoothing along the degree axis, mass preserving."""
    n = rows.shape[1]
    radius = int(np.ceil(4 * kernel_sd))
    offsets = np.arange(-radius, radius + 1)
    kernel = np.exp(-0.5 * (offsets / kernel_sd) ** 2)
    kernel /= kernel.sum()
    padded = np.pad(rows, ((0, 0), (radius, radius)), mode="edge")
    out = np.empty_like(rows)
    for k, row in enumerate(padded):
        full = np.convolve(row, kernel, mode="valid")
        out[k] = full
    out /= out.sum(axis=1, keepdims=True)
    return out
