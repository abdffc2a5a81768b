"""Coarse projective integration.

The loop alternates short bursts of the detailed stochastic model with
extrapolation jumps of the coarse variable: simulate an ensemble for
`simulate_steps` time units observing the coarse variable every
`observe_interval`, fit a line through the last `history` observations,
jump the coarse variable `project_steps` units forward, re-lift to fresh
graph realizations, and repeat. The coarse variable is either the pooled
degree distribution (projected in percentile-curve coordinates) or the
scalar edge density.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .evolution import ModelParams, child_rng, observation_times, run_ensemble
from .liftrestrict import (
    LiftingError,
    PercentileCurve,
    default_percentiles,
    distribution_from_counts,
    from_percentile_curve,
    lift_density,
    lift_distribution,
    repair_monotone,
    to_percentile_curve,
)

__all__ = ["CpiConfig", "CpiCycleRecord", "CpiResult", "project_forward", "cpi_run"]

COARSE_VARIABLES = ("degree_distribution", "edge_density")


@dataclass(frozen=True)
class CpiConfig:
    """Schedule and ensemble settings for coarse projective integration."""

    simulate_steps: float = 10.0
    observe_interval: float = 2.0
    history: int = 3
    project_steps: float = 10.0
    copies: int = 100
    coarse_variable: str = "degree_distribution"
    lift_budget: int = 1000

    def __post_init__(self):
        if self.history < 2:
            raise ValueError("history must be >= 2")
        if self.simulate_steps < self.history * self.observe_interval:
            raise ValueError(
                "simulate_steps must cover history * observe_interval observations"
            )
        if self.project_steps < 0:
            raise ValueError("project_steps must be non-negative")
        if self.coarse_variable not in COARSE_VARIABLES:
            raise ValueError(f"coarse_variable must be one of {COARSE_VARIABLES}")
        if self.copies < 1:
            raise ValueError("copies must be >= 1")


def project_forward(times, values, horizon: float, bounds: tuple | None = None):
    """Linear least-squares extrapolation of coarse observations.

    times: (h,) observation times; values: (h,) scalars or (h, k) percentile
    values per observation. Fits one line per component over all history
    points with equal weights and evaluates it at times[-1] + horizon.
    With `bounds` given, the result is repaired to be non-decreasing
    (pool-adjacent-violators) and clipped into the bounds, as needed for
    projected percentile curves.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times.ndim != 1 or times.size < 2:
        raise ValueError("need at least 2 history points")
    if np.unique(times).size != times.size:
        raise ValueError("history timestamps must be distinct")
    if values.shape[0] != times.size:
        raise ValueError("times and values must align")
    t0 = times.mean()
    shifted = times - t0
    denom = float(shifted @ shifted)
    slope = shifted @ values / denom
    intercept = values.mean(axis=0)
    projected = intercept + slope * (times[-1] + horizon - t0)
    if bounds is not None:
        lo, hi = bounds
        if projected.ndim == 0:
            projected = float(np.clip(projected, lo, hi))
        else:
            projected = repair_monotone(projected, lo, hi)
    return projected


@dataclass
class CpiCycleRecord:
    """Everything observed and decided during one CPI cycle."""

    cycle: int
    observed_times: np.ndarray
    observed: list
    projected_time: float | None = None
    projected: object | None = None
    repair_magnitude: float = 0.0
    lift_retries: list = field(default_factory=list)


@dataclass
class CpiResult:
    """Coarse-variable trace of a CPI run plus cost accounting.

    times/values hold every restriction in time order (values are pooled
    DegreeDistribution or float edge densities); cycle_of maps each entry
    to its cycle. inner_iterations counts chain iterations actually
    executed; baseline_iterations is what direct simulation of the same
    ensemble over the covered time span would cost.
    """

    params: ModelParams
    config: CpiConfig
    times: np.ndarray
    values: list
    cycle_of: np.ndarray
    records: list
    coverage: float
    inner_iterations: int
    baseline_iterations: int

    @property
    def cost_ratio(self) -> float:
        return self.inner_iterations / self.baseline_iterations

    def density_trace(self) -> np.ndarray:
        if self.config.coarse_variable == "edge_density":
            return np.asarray(self.values, dtype=np.float64)
        mean_degrees = np.array([mu.mean() for mu in self.values])
        return mean_degrees / (self.params.n - 1)


def _simulate_cycle(params, cfg, graphs, t_start, rngs):
    """Advance every copy through one simulate window, pooling restrictions.

    Returns (absolute observation times, pooled degree counts, ensemble
    mean edge density per time, total chain iterations executed).
    """
    rel_times = observation_times(cfg.simulate_steps, cfg.observe_interval)
    marks = [params.iterations(t) for t in rel_times]
    n = params.n
    pooled = np.zeros((len(rel_times), n), dtype=np.int64)
    rho_sum = np.zeros(len(rel_times))
    iterations = 0
    for g, rng in zip(graphs, rngs):
        for k, t in enumerate(rel_times):
            if k > 0:
                iters = marks[k] - marks[k - 1]
                g.edge_count = int(
                    _kernels.evolve_chain(
                        g.adj, g.edge_stack, g.edge_pos, g.edge_count,
                        iters, params.r, rng,
                    )
                )
                iterations += iters
            pooled[k] += np.bincount(g.adj.sum(axis=1), minlength=n)
            rho_sum[k] += g.edge_count / (n * (n - 1) / 2)
    return t_start + rel_times, pooled, rho_sum / len(graphs), iterations


def cpi_run(g0_factory, params: ModelParams, cfg: CpiConfig, n_cycles: int) -> CpiResult:
    """Run `n_cycles` of simulate / restrict / project / lift.

    With project_steps == 0 the jump is degenerate and no re-lifting
    happens: the run reduces by construction to plain ensemble simulation
    observed on the same schedule. Observations resume immediately after
    each lift, so short healing transients appear in the raw trace.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    degree_mode = cfg.coarse_variable == "degree_distribution"

    if cfg.project_steps == 0:
        return _plain_reference_run(g0_factory, params, cfg, n_cycles)

    all_times, all_values, all_cycles, records = [], [], [], []
    inner_iterations = 0
    t_current = 0.0
    mu_projected = None
    rho_projected = None

    for cycle in range(n_cycles):
        # (re)build the ensemble: initial factory on cycle 0, lifted from
        # the projected coarse variable afterwards
        graphs, retries = [], []
        for c in range(cfg.copies):
            lift_rng = child_rng(params.seed, cycle, c, 0)
            if cycle == 0:
                graphs.append(g0_factory(lift_rng))
            elif degree_mode:
                try:
                    lifted = lift_distribution(
                        mu_projected, 1, lift_rng, cfg.lift_budget
                    )
                except LiftingError as exc:
                    raise LiftingError(f"cycle {cycle}, copy {c}: {exc}") from exc
                graphs.append(lifted.graphs[0])
                retries.extend(lifted.retries)
            else:
                graphs.append(lift_density(rho_projected, params.n, lift_rng))
        rngs = [child_rng(params.seed, cycle, c, 1) for c in range(cfg.copies)]

        times, pooled, rho_obs, iters = _simulate_cycle(
            params, cfg, graphs, t_current, rngs
        )
        inner_iterations += iters

        if degree_mode:
            observed = [distribution_from_counts(row) for row in pooled]
        else:
            observed = list(rho_obs)
        all_times.extend(times)
        all_values.extend(observed)
        all_cycles.extend([cycle] * len(times))

        record = CpiCycleRecord(
            cycle=cycle,
            observed_times=times,
            observed=observed,
            lift_retries=retries,
        )

        # projective jump from the last `history` observations
        h = cfg.history
        t_hist = times[-h:]
        t_target = times[-1] + cfg.project_steps
        if degree_mode:
            curves = [to_percentile_curve(mu) for mu in observed[-h:]]
            stack = np.vstack([c.values for c in curves])
            raw = project_forward(t_hist, stack, cfg.project_steps)
            repaired = repair_monotone(raw, 0.0, params.n - 1)
            record.repair_magnitude = float(np.abs(repaired - raw).max())
            curve = PercentileCurve(default_percentiles(), repaired)
            mu_projected = from_percentile_curve(curve, params.n)
            record.projected = mu_projected
        else:
            rho_projected = project_forward(
                t_hist, np.asarray(observed[-h:]), cfg.project_steps, bounds=(0.0, 1.0)
            )
            record.projected = rho_projected
        record.projected_time = t_target
        records.append(record)
        t_current = t_target

    coverage = t_current + 0.0
    baseline = params.iterations(coverage) * cfg.copies
    return CpiResult(
        params=params,
        config=cfg,
        times=np.asarray(all_times),
        values=all_values,
        cycle_of=np.asarray(all_cycles),
        records=records,
        coverage=coverage,
        inner_iterations=inner_iterations,
        baseline_iterations=baseline,
    )


def _plain_reference_run(g0_factory, params, cfg, n_cycles) -> CpiResult:
    """Degenerate project_steps=0 path: plain ensemble simulation."""
    degree_mode = cfg.coarse_variable == "degree_distribution"
    t_end = cfg.simulate_steps * n_cycles
    res = run_ensemble(
        g0_factory,
        params,
        cfg.copies,
        t_end,
        cfg.observe_interval,
        observers=("degrees",),
        keep_trajectories=not degree_mode,
    )
    if degree_mode:
        values = [distribution_from_counts(row) for row in res.pooled_counts]
    else:
        values = list(res.mean_series("edge_density"))
    iterations = params.iterations(t_end) * cfg.copies
    records = [
        CpiCycleRecord(cycle=0, observed_times=res.times, observed=values)
    ]
    return CpiResult(
        params=params,
        config=cfg,
        times=res.times,
        values=values,
        cycle_of=np.zeros(len(res.times), dtype=int),
        records=records,
        coverage=t_end,
        inner_iterations=iterations,
        baseline_iterations=iterations,
    )
