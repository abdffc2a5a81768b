"""Coarse fixed points by damped matrix-free Newton-GMRES.

The coarse timestepper Phi advances a degree distribution by lifting it to
graph realizations, evolving them, and restricting back; the fixed-point
residual is F(mu) = mu - Phi(mu). Jacobian actions are estimated by
directional finite differences with common random numbers: all Phi
evaluations inside one Newton iteration reuse one seed, so the stochastic
part of Phi cancels to first order and the difference quotient measures
the systematic response. Every Newton iterate stays on the probability
simplex: GMRES updates live in the zero-sum subspace and the damping
factor keeps entries non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .evolution import ModelParams
from .liftrestrict import DegreeDistribution, LiftingError, distribution_from_counts

__all__ = [
    "NewtonConfig",
    "GmresResult",
    "NewtonReport",
    "coarse_timestepper",
    "make_evaluator",
    "residual",
    "jacobian_vector_product",
    "gmres_solve",
    "newton_gmres",
    "noise_floor_estimate",
]


@dataclass(frozen=True)
class NewtonConfig:
    """Solver constants for the coarse fixed-point iteration.

    fd_epsilon is an absolute perturbation size on the simplex. The
    stochastic timestepper is coupled through common random numbers by
    inverse-transform sampling, so the difference quotient is a step
    function of the perturbation; epsilons near sqrt(machine precision)
    would flip no samples at all and return zero. Desk-scale ensembles
    want epsilon around 0.02-0.1.
    """

    timestepper_horizon: float = 10.0
    fd_epsilon: float = 0.025
    gmres_dim: int = 20
    gmres_tol: float = 1e-3
    newton_tol: float = 1e-4
    max_newton_iters: int = 10
    damping_safety: float = 0.95
    copies: int = 100
    noise_floor_seeds: int = 5
    floor_factor: float = 1.2
    mass_floor: float = 1e-8
    max_backtracks: int = 6
    lift_budget: int = 1000

    def __post_init__(self):
        if min(self.fd_epsilon, self.gmres_tol, self.newton_tol) <= 0:
            raise ValueError("tolerances and fd_epsilon must be positive")
        if self.gmres_dim < 1:
            raise ValueError("gmres_dim must be >= 1")
        if not 0 < self.damping_safety <= 1:
            raise ValueError("damping_safety must be in (0, 1]")
        if self.timestepper_horizon <= 0:
            raise ValueError("timestepper_horizon must be positive")


# -- coarse timestepper -------------------------------------------------------


def coarse_timestepper(
    mu: DegreeDistribution,
    horizon: float,
    params: ModelParams,
    copies: int,
    seed: int,
    lift_budget: int = 1000,
) -> DegreeDistribution:
    """Phi_horizon(mu): lift -> evolve `horizon` time units -> restrict.

    Deterministic given `seed`; each copy runs on an independent
    sub-stream labelled by its index, and sampling uses inverse-transform
    draws so evaluations under one seed are coupled across nearby mu.
    """
    n = params.n
    if mu.n != n:
        raise ValueError(f"distribution has {mu.n} degrees, model has n={n}")
    cdf = mu.cdf()
    horizon_iters = params.iterations(horizon)
    hist = np.zeros(n, dtype=np.int64)
    retries = np.zeros(copies, dtype=np.int64)
    seeds = np.random.SeedSequence(entropy=seed).generate_state(copies, np.uint32)
    ok = _kernels.phi_ensemble(
        cdf, copies, seeds, horizon_iters, params.r, lift_budget, hist, retries
    )
    if not ok:
        raise LiftingError(
            f"no graphical sequence in {lift_budget} draws "
            f"(mean {mu.mean():.3f}, sd {mu.sd():.3f})"
        )
    return distribution_from_counts(hist)


def make_evaluator(params: ModelParams, cfg: NewtonConfig):
    """Phi evaluation closure used by the Newton machinery."""

    def evaluator(mu: DegreeDistribution, seed: int) -> DegreeDistribution:
        return coarse_timestepper(
            mu, cfg.timestepper_horizon, params, cfg.copies, seed, cfg.lift_budget
        )

    return evaluator


def residual(mu: DegreeDistribution, evaluator, seed: int) -> np.ndarray:
    """F(mu) = mu - Phi(mu); sums to zero as a difference of distributions."""
    return mu.probs - evaluator(mu, seed).probs


def jacobian_vector_product(
    mu: DegreeDistribution,
    v: np.ndarray,
    evaluator,
    seed: int,
    eps: float,
    f_mu: np.ndarray | None = None,
    mass_floor: float = 1e-8,
) -> np.ndarray:
    """Directional derivative estimate (F(mu + eps vhat) - F(mu)) / eps * |v|.

    Common random numbers: both residuals use the same seed. Descent
    components at empty bins are projected out of the direction first (no
    epsilon can make those admissible), then epsilon shrinks automatically
    while the perturbed point still leaves the simplex; what remains of the
    violation scales with epsilon, so the loop terminates.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0:
        raise ValueError("direction vector must be non-zero")
    vhat = v / norm
    blocked = (mu.probs <= mass_floor) & (vhat < 0.0)
    if blocked.any():
        vhat = vhat.copy()
        vhat[blocked] = 0.0
        vhat -= vhat.sum() * mu.probs
        vnorm = float(np.linalg.norm(vhat))
        if vnorm == 0:
            raise ValueError("direction vanishes after simplex projection")
        vhat /= vnorm
    if f_mu is None:
        f_mu = residual(mu, evaluator, seed)
    for _ in range(80):
        raw = mu.probs + eps * vhat
        clipped = np.clip(raw, 0.0, None)
        clip_mass = float((clipped - raw).sum())
        if clip_mass <= 1e-3 * eps:
            break
        eps /= 2.0
    else:
        raise ValueError("no admissible finite-difference step on the simplex")
    mu_pert = DegreeDistribution(clipped / clipped.sum())
    f_pert = residual(mu_pert, evaluator, seed)
    out = (f_pert - f_mu) / eps * norm
    return out - out.mean()


# -- GMRES ---------------------------------------------------------------------


@dataclass
class GmresResult:
    x: np.ndarray
    rel_residual: float
    iterations: int
    breakdown: bool


def gmres_solve(apply, rhs: np.ndarray, max_dim: int = 20, tol: float = 1e-3) -> GmresResult:
    """Arnoldi GMRES for the matrix-free operator `apply`.

    rhs is expected to sum to zero; since the Krylov space is spanned by
    images of zero-sum vectors the update inherits that property, and the
    returned solution is numerically re-projected onto the zero-sum
    subspace to scrub roundoff.
    """
    b = np.asarray(rhs, dtype=np.float64)
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        return GmresResult(np.zeros_like(b), 0.0, 0, False)
    m = min(max_dim, b.size)
    q_vectors = [b / beta]
    h = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    breakdown = False
    k_used = 0
    for j in range(m):
        w = np.asarray(apply(q_vectors[j]), dtype=np.float64)
        for i in range(j + 1):
            h[i, j] = q_vectors[i] @ w
            w = w - h[i, j] * q_vectors[i]
        h[j + 1, j] = float(np.linalg.norm(w))
        happy = h[j + 1, j] <= 1e-14 * beta
        if not happy:
            q_vectors.append(w / h[j + 1, j])
        # apply accumulated Givens rotations, then the new one
        for i in range(j):
            temp = cs[i] * h[i, j] + sn[i] * h[i + 1, j]
            h[i + 1, j] = -sn[i] * h[i, j] + cs[i] * h[i + 1, j]
            h[i, j] = temp
        denom = float(np.hypot(h[j, j], h[j + 1, j]))
        if denom <= 1e-300:
            # the operator annihilates the Krylov space; nothing to solve
            k_used = j
            breakdown = True
            break
        cs[j] = h[j, j] / denom
        sn[j] = h[j + 1, j] / denom
        h[j, j] = denom
        h[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        k_used = j + 1
        rel = abs(g[j + 1]) / beta
        if happy:
            breakdown = True
            break
        if rel <= tol:
            break
    x = np.zeros_like(b)
    if k_used > 0:
        y = np.linalg.solve(h[:k_used, :k_used], g[:k_used])
        for i in range(k_used):
            x += y[i] * q_vectors[i]
        x -= x.mean()
    rel = abs(g[k_used]) / beta
    return GmresResult(x=x, rel_residual=float(rel), iterations=k_used, breakdown=breakdown)


# -- Newton outer loop -----------------------------------------------------------


def noise_floor_estimate(
    mu: DegreeDistribution, evaluator, seeds
) -> tuple[float, float]:
    """Stochastic component of ||F(mu)||_1 across independent seeds.

    Returns (floor, mean residual norm); the floor is the mean L1 spread
    of the residuals around their average, rescaled by sqrt(k/(k-1)).
    """
    residuals = [residual(mu, evaluator, s) for s in seeds]
    stack = np.vstack(residuals)
    center = stack.mean(axis=0)
    spreads = np.abs(stack - center).sum(axis=1)
    k = len(seeds)
    floor = float(spreads.mean() * np.sqrt(k / (k - 1)))
    return floor, float(np.abs(stack).sum(axis=1).mean())


@dataclass
class NewtonIteration:
    f_norm: float
    damping: float = np.nan
    gmres_rel_residual: float = np.nan
    gmres_iterations: int = 0
    eps_used: float = np.nan


@dataclass
class NewtonReport:
    """Outcome of the damped Newton-GMRES iteration."""

    mu: DegreeDistribution
    iterations: list = field(default_factory=list)
    noise_floor: float = 0.0
    converged: bool = False
    stagnated: bool = False

    @property
    def residual_norms(self) -> np.ndarray:
        return np.array([it.f_norm for it in self.iterations])


def newton_gmres(
    mu0: DegreeDistribution,
    params: ModelParams,
    cfg: NewtonConfig,
    evaluator=None,
) -> NewtonReport:
    """Damped Newton-GMRES on F(mu) = mu - Phi(mu).

    Updates are mu <- mu + c dmu. The starting c caps the mass the step
    would clip at the simplex boundary (descent components at empty bins
    are projected out first); a backtracking line search on the same-seed
    residual norm then halves c until the step actually decreases ||F||,
    since far from the fixed point the full transport overshoots the
    linearization. Iterates stay non-negative with unit sum throughout.
    One seed serves all Phi evaluations within an iteration (common random
    numbers) and is refreshed across iterations. Convergence is declared
    at max(newton_tol, floor_factor * noise floor); stagnation (three
    iterations without progress beyond the floor) is flagged, not raised.
    """
    if evaluator is None:
        evaluator = make_evaluator(params, cfg)
    floor_seeds = [
        _derive_seed(params.seed, 1, j) for j in range(cfg.noise_floor_seeds)
    ]
    floor, _ = noise_floor_estimate(mu0, evaluator, floor_seeds)
    report = NewtonReport(mu=mu0, noise_floor=floor)
    mu = mu0
    target = max(cfg.newton_tol, cfg.floor_factor * floor)
    best = np.inf
    stall = 0
    for k in range(cfg.max_newton_iters):
        seed_k = _derive_seed(params.seed, 2, k)
        f = residual(mu, evaluator, seed_k)
        f_norm = float(np.abs(f).sum())
        entry = NewtonIteration(f_norm=f_norm)
        report.iterations.append(entry)
        report.mu = mu
        if f_norm <= target:
            report.converged = True
            break
        if f_norm < best - 0.25 * floor:
            best = f_norm
            stall = 0
        else:
            stall += 1
            if stall >= 3:
                report.stagnated = True
                break

        def apply(w):
            return jacobian_vector_product(
                mu, w, evaluator, seed_k, cfg.fd_epsilon, f_mu=f
            )

        sol = gmres_solve(apply, -f, max_dim=cfg.gmres_dim, tol=cfg.gmres_tol)
        dmu = sol.x
        # bins with negligible mass cannot constrain the step: descent
        # components there are blocked (the clip below keeps them at zero)
        # and the zero sum is restored by removing mass proportionally,
        # which preserves non-negativity structure
        blocked = (mu.probs <= cfg.mass_floor) & (dmu < 0.0)
        if blocked.any():
            dmu = dmu.copy()
            dmu[blocked] = 0.0
        dmu = dmu - dmu.sum() * mu.probs
        c = min(1.0, cfg.damping_safety * _max_feasible_step(mu.probs, dmu))
        # backtracking line search on the (same-seed, hence comparable)
        # residual norm: far from the fixed point the full transport
        # overshoots the linearization and an unchecked step can go uphill
        best_mu, best_norm = None, np.inf
        for _ in range(cfg.max_backtracks):
            trial_probs = np.clip(mu.probs + c * dmu, 0.0, None)
            trial = DegreeDistribution(trial_probs / trial_probs.sum())
            trial_norm = float(
                np.abs(residual(trial, evaluator, seed_k)).sum()
            )
            if trial_norm < best_norm:
                best_mu, best_norm = trial, trial_norm
            if trial_norm <= f_norm - 0.05 * (f_norm - target) or trial_norm <= target:
                break
            c /= 2.0
        entry.damping = c
        entry.gmres_rel_residual = sol.rel_residual
        entry.gmres_iterations = sol.iterations
        entry.eps_used = cfg.fd_epsilon
        mu = best_mu
    else:
        # loop exhausted: record the final residual norm
        seed_k = _derive_seed(params.seed, 2, cfg.max_newton_iters)
        f_norm = float(np.abs(residual(mu, evaluator, seed_k)).sum())
        report.iterations.append(NewtonIteration(f_norm=f_norm))
        report.mu = mu
        if f_norm <= target:
            report.converged = True
    return report


def _max_feasible_step(mu: np.ndarray, dmu: np.ndarray, clip_budget: float = 0.02) -> float:
    """Largest c in (0, 1] whose update clips away at most `clip_budget`
    of the transported mass.

    The strict rule max{c: mu + c dmu >= 0} stalls in practice: direction
    components at low-mass bins are finite-difference noise and would clamp
    c near zero. Allowing the step to drive a sliver of mass negative
    (clipped and renormalized by the caller) keeps iterates valid while the
    bulk transport proceeds.
    """
    moved = float(np.abs(dmu).sum()) / 2.0
    if moved == 0.0:
        return 1.0

    def clipped(c):
        return float(np.clip(-(mu + c * dmu), 0.0, None).sum())

    if clipped(1.0) <= clip_budget * moved:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if clipped(mid) <= clip_budget * mid * moved:
            lo = mid
        else:
            hi = mid
    return max(lo, 1e-6)


def _derive_seed(master: int, phase: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=master, spawn_key=(phase, index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
