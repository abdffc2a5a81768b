"""Closed-form reference dynamics.

Core claims:
    - rho/degree/graphon closed forms satisfy their ODEs (finite differences
      and adaptive integration oracles)
    - graphon subgraph densities match hand-computed block formulas and the
      density ODE system along trajectories
    - convergence rates, stationary law, Fokker-Planck eigenpairs and the
      OU discretization match their stated formulas
"""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from netcoarse.theory import (
    Graphon,
    TheoryParams,
    constant_graphon,
    convergence_rates,
    degree_closed_form,
    degree_ode_rhs,
    density_ode_rhs,
    fokker_planck_eigenfunctions,
    graphon_evolve,
    ou_simulate,
    rho_closed_form,
    stationary_degree_law,
    subgraph_densities,
)


def checkerboard_graphon(a, b, m=40):
    vals = np.full((m, m), a)
    half = m // 2
    vals[:half, half:] = b
    vals[half:, :half] = b
    return Graphon(vals)


class TestRho:
    def test_equilibrium_start_is_constant(self):
        p = TheoryParams(r=0.9, rho0=0.1)
        t = np.linspace(0, 20, 50)
        assert np.allclose(rho_closed_form(t, p), 0.1)

    def test_limit(self):
        p = TheoryParams(r=0.9, rho0=0.0)
        assert rho_closed_form(200.0, p) == pytest.approx(0.1)
        assert rho_closed_form(1.0, p) == pytest.approx(0.1 * (1 - np.exp(-1)))

    def test_ode_residual_by_finite_differences(self):
        p = TheoryParams(r=0.7, rho0=0.35)
        h = 1e-5
        for t in np.linspace(0.1, 5.0, 23):
            drho = (rho_closed_form(t + h, p) - rho_closed_form(t - h, p)) / (2 * h)
            assert abs(drho - ((1 - p.r) - rho_closed_form(t, p))) < 1e-9


class TestDegree:
    def test_slaved_initial_condition(self):
        p = TheoryParams(r=0.9, rho0=0.25, d0=0.25)
        t = np.linspace(0, 10, 40)
        assert np.allclose(degree_closed_form(t, p), rho_closed_form(t, p), atol=1e-12)

    def test_limit(self):
        p = TheoryParams(r=0.6, rho0=0.5, d0=0.9)
        assert degree_closed_form(80.0, p) == pytest.approx(0.4)

    def test_rejects_zero_rho0(self):
        with pytest.raises(ValueError, match="singular"):
            degree_closed_form(1.0, TheoryParams(r=0.9, rho0=0.0, d0=0.5))

    @pytest.mark.parametrize(
        "r,rho0,d0", [(0.9, 0.25, 0.5), (0.5, 0.8, 0.1), (0.2, 0.4, 0.4)]
    )
    def test_matches_numerical_integration(self, r, rho0, d0):
        p = TheoryParams(r=r, rho0=rho0, d0=d0)
        sol = solve_ivp(
            lambda t, y: [degree_ode_rhs(t, y[0], p)],
            (0.0, 0.2),
            [d0],
            rtol=1e-11,
            atol=1e-13,
            dense_output=True,
        )
        for t in (0.05, 0.1, 0.2):
            assert degree_closed_form(t, p) == pytest.approx(
                sol.sol(t)[0], abs=1e-8
            )

    def test_degree_minus_rho_log_slope(self):
        # |D - rho| decays at the asymptotic rate 1/(1-r); start near the
        # equilibrium density so the rate applies before the gap hits
        # double-precision noise
        p = TheoryParams(r=0.9, rho0=0.101, d0=0.9)
        t = np.linspace(0.5, 1.5, 60)
        gap = np.abs(degree_closed_form(t, p) - rho_closed_form(t, p))
        slope = np.polyfit(t, np.log(gap), 1)[0]
        assert slope == pytest.approx(-10.0, rel=0.01)


class TestGraphon:
    def test_constant_stays_constant(self):
        p = TheoryParams(r=0.9, rho0=0.25)
        w = graphon_evolve(constant_graphon(0.25, 30), 3.0, p)
        assert np.allclose(w.values, rho_closed_form(3.0, p), atol=1e-12)

    def test_everything_tends_to_constant(self):
        w0 = checkerboard_graphon(0.1, 0.5)
        p = TheoryParams(r=0.9, rho0=w0.edge_integral())
        w = graphon_evolve(w0, 10.0, p)
        assert np.abs(w.values - 0.1).max() <= 1e-4

    def test_inconsistent_rho0_rejected(self):
        w0 = checkerboard_graphon(0.2, 0.6)
        with pytest.raises(ValueError, match="inconsistent"):
            graphon_evolve(w0, 1.0, TheoryParams(r=0.9, rho0=0.9))

    def test_matches_per_cell_ode(self):
        w0 = checkerboard_graphon(0.15, 0.45, m=8)
        p = TheoryParams(r=0.8, rho0=w0.edge_integral())
        t_end = 0.3

        def rhs(t, y):
            return 1.0 - (1.0 + p.r / rho_closed_form(t, p)) * y

        sol = solve_ivp(
            rhs, (0, t_end), w0.values.ravel(), rtol=1e-11, atol=1e-13
        )
        w = graphon_evolve(w0, t_end, p)
        assert np.abs(w.values.ravel() - sol.y[:, -1]).max() < 1e-8

    def test_empty_graphon_follows_er_branch(self):
        p = TheoryParams(r=0.9, rho0=0.0)
        w = graphon_evolve(constant_graphon(0.0, 20), 1.0, p)
        assert np.allclose(w.values, 0.1 * (1 - np.exp(-1)), atol=1e-12)


class TestSubgraphDensities:
    def test_constant(self):
        w = constant_graphon(0.3, 50)
        e, ch, tr = subgraph_densities(w)
        assert e == pytest.approx(0.3)
        assert ch == pytest.approx(0.09)
        assert tr == pytest.approx(0.027)

    def test_zero(self):
        assert subgraph_densities(constant_graphon(0.0, 10)) == (0.0, 0.0, 0.0)

    def test_two_block_analytic(self):
        # W = a on the diagonal blocks, b off-diagonal, equal halves:
        #   edge     = (a + b)/2
        #   cherry   = mean over rows of row-mean^2 = ((a+b)/2)^2
        #   triangle = (a^3 + 3 a b^2)/4
        a, b = 0.2, 0.6
        w = checkerboard_graphon(a, b, m=40)
        e, ch, tr = subgraph_densities(w)
        assert e == pytest.approx((a + b) / 2, abs=1e-10)
        assert ch == pytest.approx(((a + b) / 2) ** 2, abs=1e-10)
        assert tr == pytest.approx((a**3 + 3 * a * b**2) / 4, abs=1e-10)


class TestDensityOde:
    def test_stationary_triple_is_fixed_point(self):
        p = TheoryParams(r=0.35)
        q = 1 - p.r
        assert density_ode_rhs(q, q**2, q**3, p) == pytest.approx((0.0, 0.0, 0.0))

    def test_r0_complete_graph_absorbing(self):
        p = TheoryParams(r=0.0)
        d_edge, d_cherry, d_tri = density_ode_rhs(1.0, 1.0, 1.0, p)
        assert d_edge == 0.0 and d_cherry == 0.0 and d_tri == 0.0

    def test_rejects_zero_density(self):
        with pytest.raises(ValueError, match="singular"):
            density_ode_rhs(0.0, 0.0, 0.0, TheoryParams(r=0.5))

    def test_graphon_trajectory_solves_density_system(self):
        w0 = checkerboard_graphon(0.15, 0.55, m=40)
        p = TheoryParams(r=0.9, rho0=w0.edge_integral())
        y0 = subgraph_densities(w0)
        sol = solve_ivp(
            lambda t, y: density_ode_rhs(y[0], y[1], y[2], p),
            (0.0, 2.0),
            y0,
            rtol=1e-10,
            atol=1e-12,
            dense_output=True,
        )
        for t in (0.3, 1.0, 2.0):
            direct = subgraph_densities(graphon_evolve(w0, t, p))
            assert np.abs(np.array(direct) - sol.sol(t)).max() < 1e-6


class TestRatesAndStationaryLaw:
    def test_rates_r09(self):
        rates = convergence_rates(TheoryParams(r=0.9))
        assert rates == pytest.approx(
            {"edge": 1.0, "degree": 10.0, "cherry": 20.0, "triangle": 30.0}
        )

    def test_rates_r0(self):
        rates = convergence_rates(TheoryParams(r=0.0))
        assert (rates["edge"], rates["degree"]) == (1.0, 1.0)
        assert (rates["cherry"], rates["triangle"]) == (2.0, 3.0)

    def test_rates_r05(self):
        rates = convergence_rates(TheoryParams(r=0.5))
        assert rates == pytest.approx(
            {"edge": 1.0, "degree": 2.0, "cherry": 4.0, "triangle": 6.0}
        )

    def test_rates_match_difference_ode_slopes(self):
        # integrate the cherry-deviation ODE and fit the log slope
        p = TheoryParams(r=0.5, rho0=0.5)

        def rhs(t, y):
            return [-2 * (1 + p.r / rho_closed_form(t, p)) * y[0]]

        sol = solve_ivp(rhs, (0, 3), [0.1], rtol=1e-11, atol=1e-13, dense_output=True)
        t = np.linspace(2.0, 3.0, 30)
        slope = np.polyfit(t, np.log(np.abs(sol.sol(t)[0])), 1)[0]
        assert slope == pytest.approx(-convergence_rates(p)["cherry"], rel=0.01)

    def test_stationary_law_r09_n100(self):
        law = stationary_degree_law(TheoryParams(r=0.9), 100)
        assert law["raw_mean"] == pytest.approx(10.0)
        assert law["raw_sd"] == pytest.approx(3.0)

    def test_stationary_law_r0(self):
        law = stationary_degree_law(TheoryParams(r=0.0), 50)
        assert law["normed_sd"] == 0.0

    def test_stationary_law_r05(self):
        law = stationary_degree_law(TheoryParams(r=0.5), 100)
        assert law["normed_sd"] == pytest.approx(0.05)


class TestFokkerPlanck:
    def test_eigenvalues_r09(self):
        grid = np.linspace(-1, 1, 201)
        pairs = fokker_planck_eigenfunctions(TheoryParams(r=0.9), grid)
        assert [lam for lam, _ in pairs] == pytest.approx([0.0, -10.0, -20.0])

    def test_parity(self):
        grid = np.linspace(-1, 1, 201)
        (l0, f0), (l1, f1), (l2, f2) = fokker_planck_eigenfunctions(
            TheoryParams(r=0.9), grid
        )
        assert np.allclose(f0, f0[::-1])
        assert np.allclose(f1, -f1[::-1])
        assert np.allclose(f2, f2[::-1])

    def test_f2_sign_change(self):
        r = 0.9
        root = np.sqrt(r * (1 - r))
        grid = np.array([-2 * root, 0.0, 2 * root, root * 0.999, root * 1.001])
        _, f2 = fokker_planck_eigenfunctions(TheoryParams(r=r), grid)[2]
        assert root == pytest.approx(0.3)
        assert f2[1] > 0 > f2[0] and f2[2] < 0
        assert f2[3] > 0 > f2[4]

    def test_unit_max_abs(self):
        grid = np.linspace(-1, 1, 501)
        for _, f in fokker_planck_eigenfunctions(TheoryParams(r=0.7), grid):
            assert np.abs(f).max() == pytest.approx(1.0)


class TestOu:
    def test_zero_noise_decay(self):
        p = TheoryParams(r=0.9)
        rng = np.random.default_rng(0)
        times, x = ou_simulate(p, 1.0, 1.0, 1e-4, rng, noise_scale=0.0)
        # first-order Euler bias is about theta^2 * t * dt / 2 = 0.5%
        assert x[-1] == pytest.approx(np.exp(-10.0), rel=1e-2)

    def test_stationary_variance(self):
        p = TheoryParams(r=0.9)
        rng = np.random.default_rng(7)
        x0 = np.zeros(400)
        _, x = ou_simulate(p, x0, 3.0, 1e-3, rng)
        late = x[len(x) // 2 :]
        assert late.var() == pytest.approx(0.09, abs=0.01)

    def test_dt_halving_consistent(self):
        p = TheoryParams(r=0.9)
        estimates = []
        for k, dt in enumerate((2e-3, 1e-3)):
            rng = np.random.default_rng(100 + k)
            _, x = ou_simulate(p, np.zeros(400), 3.0, dt, rng)
            estimates.append(x[len(x) // 2 :].var())
        assert abs(estimates[0] - estimates[1]) < 0.02


class TestValidation:
    def test_param_ranges(self):
        with pytest.raises(ValueError):
            TheoryParams(r=1.0)
        with pytest.raises(ValueError):
            TheoryParams(r=0.5, rho0=1.5)

    def test_graphon_must_be_symmetric(self):
        vals = np.zeros((4, 4))
        vals[0, 1] = 0.5
        with pytest.raises(ValueError, match="symmetric"):
            Graphon(vals)

    def test_graphon_range_checked(self):
        with pytest.raises(ValueError, match="\\[0, 1\\]"):
            Graphon(np.full((4, 4), 1.5))
