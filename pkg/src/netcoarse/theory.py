"""Closed-form results for the edge/degree/graphon dynamics.

Everything here is deterministic reference math used to validate the
stochastic simulation and the equation-free machinery: explicit ODE
solutions for edge density, normed vertex degree and the graphon, the
cherry/triangle density ODE system, convergence rates, the stationary
degree law, the Ornstein-Uhlenbeck fluctuation process and the first
eigenpairs of its Fokker-Planck operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TheoryParams",
    "Graphon",
    "constant_graphon",
    "rho_closed_form",
    "degree_closed_form",
    "graphon_evolve",
    "subgraph_densities",
    "density_ode_rhs",
    "convergence_rates",
    "stationary_degree_law",
    "fokker_planck_eigenfunctions",
    "ou_simulate",
]


@dataclass(frozen=True)
class TheoryParams:
    """Parameters of the limiting deterministic dynamics.

    r: removal probability in [0, 1).
    rho0: initial edge density.
    d0: initial normed degree of the tracked vertex.
    grid_m: graphon grid resolution (cells per axis).
    """

    r: float
    rho0: float = 0.0
    d0: float = 0.0
    grid_m: int = 200

    def __post_init__(self):
        if not 0.0 <= self.r < 1.0:
            raise ValueError(f"r must be in [0, 1), got {self.r}")
        if not 0.0 <= self.rho0 <= 1.0:
            raise ValueError(f"rho0 must be in [0, 1], got {self.rho0}")
        if not 0.0 <= self.d0 <= 1.0:
            raise ValueError(f"d0 must be in [0, 1], got {self.d0}")
        if self.grid_m < 2:
            raise ValueError(f"grid_m must be >= 2, got {self.grid_m}")


class Graphon:
    """Symmetric grid function on [0,1]^2 with values in [0,1].

    values[i, j] is the function value at the midpoint of grid cell (i, j);
    all integrals below use the midpoint rule, which is exact for
    grid-constant functions.
    """

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("graphon grid must be a square matrix")
        if values.shape[0] < 2:
            raise ValueError("graphon grid must be at least 2x2")
        if not np.allclose(values, values.T, atol=1e-12):
            raise ValueError("graphon grid must be symmetric")
        if values.min() < -1e-12 or values.max() > 1 + 1e-12:
            raise ValueError("graphon values must lie in [0, 1]")
        self.values = np.clip(values, 0.0, 1.0)

    @property
    def grid_m(self) -> int:
        return self.values.shape[0]

    def edge_integral(self) -> float:
        return float(self.values.mean())


def constant_graphon(p: float, grid_m: int = 200) -> Graphon:
    return Graphon(np.full((grid_m, grid_m), float(p)))


def rho_closed_form(t, p: TheoryParams):
    """Edge density rho(t) = (1-r) + (rho(0) - (1-r)) e^{-t}."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    limit = 1.0 - p.r
    out = limit + (p.rho0 - limit) * np.exp(-t)
    return float(out) if out.ndim == 0 else out


def degree_closed_form(t, p: TheoryParams):
    """Normed degree D(t) from the explicit solution of its linear ODE.

    D(t) = rho(t) + e^{-t/(1-r)} rho(t)^{-r/(1-r)}
           (rho(0)^{r/(1-r)} D(0) - rho(0)^{1/(1-r)}).

    The formula is singular at rho(0) = 0; integrate the ODE directly for
    that case.
    """
    if p.rho0 <= 0.0:
        raise ValueError(
            "degree closed form is singular at rho0 = 0; use a numerical "
            "integrator for empty initial graphs"
        )
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    r = p.r
    rho_t = rho_closed_form(t, p)
    bracket = p.rho0 ** (r / (1 - r)) * p.d0 - p.rho0 ** (1 / (1 - r))
    out = rho_t + np.exp(-t / (1 - r)) * rho_t ** (-r / (1 - r)) * bracket
    return float(out) if out.ndim == 0 else out


def degree_ode_rhs(t: float, d: float, p: TheoryParams) -> float:
    """dD/dt = 1 - (1 + r/rho(t)) D."""
    rho_t = rho_closed_form(t, p)
    return 1.0 - (1.0 + p.r / rho_t) * d


def graphon_evolve(w0: Graphon, t: float, p: TheoryParams) -> Graphon:
    """Evolve a graphon by the explicit pointwise solution.

    Requires p.rho0 to match the edge integral of w0; a constant graphon
    stays constant and every graphon tends to the constant 1-r.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    rho_w = w0.edge_integral()
    if abs(rho_w - p.rho0) > 1e-6:
        raise ValueError(
            f"graphon edge integral {rho_w:.8f} inconsistent with rho0={p.rho0:.8f}"
        )
    if p.rho0 == 0.0:
        # only the zero graphon has zero edge integral; it stays constant
        # at rho(t), the ER branch of the dynamics
        return constant_graphon(rho_closed_form(t, p), w0.grid_m)
    r = p.r
    rho_t = rho_closed_form(t, p)
    bracket = p.rho0 ** (r / (1 - r)) * w0.values - p.rho0 ** (1 / (1 - r))
    values = rho_t + np.exp(-t / (1 - r)) * rho_t ** (-r / (1 - r)) * bracket
    return Graphon(np.clip(values, 0.0, 1.0))


def subgraph_densities(w: Graphon) -> tuple[float, float, float]:
    """(edge, cherry, triangle) homomorphism densities of the graphon.

    edge     = int W,
    cherry   = int W(x,y) W(y,z),
    triangle = int W(x,y) W(y,z) W(z,x),
    all by the midpoint rule on the grid.
    """
    vals = w.values
    m = w.grid_m
    edge = float(vals.mean())
    row_means = vals.mean(axis=0)
    cherry = float((row_means**2).mean())
    triangle = float(np.trace(vals @ vals @ vals) / m**3)
    return edge, cherry, triangle


def density_ode_rhs(
    edge: float, cherry: float, triangle: float, p: TheoryParams
) -> tuple[float, float, float]:
    """Time derivatives of the (edge, cherry, triangle) density system.

    d(edge)/dt     = (1-r) - edge
    d(cherry)/dt   = 2 edge - 2 (1 + r/edge) cherry
    d(triangle)/dt = 3 cherry - 3 (1 + r/edge) triangle
    """
    if edge <= 0:
        raise ValueError("density ODEs are singular at zero edge density")
    decay = 1.0 + p.r / edge
    return (
        (1.0 - p.r) - edge,
        2.0 * edge - 2.0 * decay * cherry,
        3.0 * cherry - 3.0 * decay * triangle,
    )


def convergence_rates(p: TheoryParams) -> dict:
    """Asymptotic convergence rates alpha, sign convention
    lim (1/t) log|a(t) - b(t)| = -alpha.

    edge: rho(t) -> 1-r; degree: D(t) -> rho(t); cherry: cherry density ->
    its slaved value rho(t)^2; triangle: relative triangle density between
    two evolutions with matched edge/cherry densities.
    """
    s = 1.0 / (1.0 - p.r)
    return {"edge": 1.0, "degree": s, "cherry": 2.0 * s, "triangle": 3.0 * s}


def stationary_degree_law(p: TheoryParams, n: int) -> dict:
    """Gaussian stationary law of the degree for an n-vertex graph.

    Normed degree: mean 1-r, sd sqrt(r(1-r))/sqrt(n). Raw degree scales
    both by n.
    """
    if n < 1:
        raise ValueError("n must be positive")
    mean = 1.0 - p.r
    sd = np.sqrt(p.r * (1.0 - p.r)) / np.sqrt(n)
    return {
        "normed_mean": mean,
        "normed_sd": float(sd),
        "raw_mean": n * mean,
        "raw_sd": float(n * sd),
    }


def fokker_planck_eigenfunctions(p: TheoryParams, grid: np.ndarray):
    """First three eigenpairs of the fluctuation Fokker-Planck operator.

    Returns [(lambda_k, f_k on grid)] with
        lambda_0 = 0,        f_0(x) = exp(-x^2 / (2 r (1-r)))
        lambda_1 = -1/(1-r), f_1(x) = f_0(x) * x
        lambda_2 = -2/(1-r), f_2(x) = f_0(x) * (r - x^2/(1-r))
    each normalized to unit maximum absolute value on the grid.
    """
    if not 0.0 < p.r < 1.0:
        raise ValueError("eigenfunctions need r in (0, 1)")
    x = np.asarray(grid, dtype=np.float64)
    r = p.r
    f0 = np.exp(-0.5 * x**2 / (r * (1 - r)))
    f1 = f0 * x
    f2 = f0 * (r - x**2 / (1 - r))
    pairs = []
    for k, f in enumerate((f0, f1, f2)):
        peak = np.abs(f).max()
        if peak > 0:
            f = f / peak
        pairs.append((-k / (1 - r), f))
    return pairs


def ou_simulate(
    p: TheoryParams,
    x0,
    t_end: float,
    dt: float,
    rng: np.random.Generator,
    noise_scale: float = 1.0,
):
    """Euler-Maruyama paths of dX = -X/(1-r) dt + sqrt(2r) dW.

    x0 may be a scalar or an array of initial values (one path each).
    Returns (times, values) with values of shape (steps+1,) + shape(x0).
    The long-run variance of the exact process is r(1-r).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.atleast_1d(np.asarray(x0, dtype=np.float64)).copy()
    steps = int(round(t_end / dt))
    times = np.arange(steps + 1) * dt
    out = np.empty((steps + 1,) + x.shape)
    out[0] = x
    theta = 1.0 / (1.0 - p.r)
    sigma = noise_scale * np.sqrt(2.0 * p.r)
    sqdt = np.sqrt(dt)
    for k in range(steps):
        x = x - theta * x * dt + sigma * sqdt * rng.standard_normal(x.shape)
        out[k + 1] = x
    if np.isscalar(x0) or np.asarray(x0).ndim == 0:
        out = out[:, 0]
    return times, out
