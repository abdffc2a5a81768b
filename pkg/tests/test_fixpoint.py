"""Matrix-free Newton-GMRES machinery.

Core claims:
    - GMRES matches a dense solve on zero-sum-subspace operators and
      returns zero-sum updates
    - directional derivatives match the exact Jacobian action on linear
      stubs, with first-order finite-difference error on smooth ones
    - the Newton loop converges in one iteration on a linear stub and
      keeps every iterate on the probability simplex
    - the coarse timestepper is deterministic and near-stationary inputs
      give residuals at the sampling-noise scale
"""

import numpy as np
import pytest

from netcoarse.evolution import ModelParams
from netcoarse.fixpoint import (
    GmresResult,
    NewtonConfig,
    coarse_timestepper,
    gmres_solve,
    jacobian_vector_product,
    make_evaluator,
    newton_gmres,
    noise_floor_estimate,
    residual,
)
from netcoarse.liftrestrict import DegreeDistribution, discretized_normal, l1_distance


def zero_sum_basis(n):
    ones = np.ones(n) / np.sqrt(n)
    q, _ = np.linalg.qr(np.eye(n) - np.outer(ones, ones))
    return q[:, : n - 1]


def linear_evaluator(matrix, mu_star):
    """Deterministic stub: Phi(mu) = mu - A (mu - mu*)."""

    def evaluator(mu, seed):
        out = mu.probs - matrix @ (mu.probs - mu_star.probs)
        out = np.clip(out, 0.0, None)
        return DegreeDistribution(out / out.sum())

    return evaluator


def interior_normal(mean, sd, n):
    """Discretized normal mixed with uniform mass, so every bin sits well
    inside the simplex (keeps stub derivatives exact, no clipping)."""
    probs = 0.95 * discretized_normal(mean, sd, n).probs + 0.05 / n
    return DegreeDistribution(probs / probs.sum())


class TestNewtonConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            NewtonConfig(fd_epsilon=0.0)
        with pytest.raises(ValueError):
            NewtonConfig(gmres_dim=0)
        with pytest.raises(ValueError):
            NewtonConfig(damping_safety=1.5)


class TestGmres:
    def test_identity_one_iteration(self):
        rng = np.random.default_rng(0)
        b = rng.standard_normal(12)
        b -= b.mean()
        res = gmres_solve(lambda v: v, b, max_dim=10, tol=1e-12)
        assert res.iterations == 1
        assert np.allclose(res.x, b)

    def test_zero_rhs(self):
        res = gmres_solve(lambda v: v, np.zeros(6))
        assert np.all(res.x == 0) and res.iterations == 0

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(1)
        n = 20
        basis = zero_sum_basis(n)
        m = np.eye(n - 1) + 0.3 * rng.standard_normal((n - 1, n - 1))
        a = basis @ m @ basis.T
        rhs = basis @ rng.standard_normal(n - 1)
        res = gmres_solve(lambda v: a @ v, rhs, max_dim=25, tol=1e-13)
        direct = basis @ np.linalg.solve(m, basis.T @ rhs)
        assert np.abs(res.x - direct).max() < 1e-8

    def test_update_zero_sum(self):
        rng = np.random.default_rng(2)
        n = 15
        basis = zero_sum_basis(n)
        a = basis @ (np.eye(n - 1) + 0.2 * rng.standard_normal((n - 1, n - 1))) @ basis.T
        rhs = basis @ rng.standard_normal(n - 1)
        res = gmres_solve(lambda v: a @ v, rhs, max_dim=20, tol=1e-10)
        assert abs(res.x.sum()) <= 1e-10

    def test_happy_breakdown(self):
        # rhs is an eigenvector: the Krylov space closes after one step
        rhs = np.zeros(8)
        rhs[0], rhs[1] = 1.0, -1.0
        res = gmres_solve(lambda v: 2.0 * v, rhs, max_dim=5, tol=1e-30)
        assert res.breakdown
        assert np.allclose(res.x, rhs / 2.0)

    def test_tolerance_flagging(self):
        rng = np.random.default_rng(3)
        n = 10
        basis = zero_sum_basis(n)
        a = basis @ (np.eye(n - 1) + 0.5 * rng.standard_normal((n - 1, n - 1))) @ basis.T
        rhs = basis @ rng.standard_normal(n - 1)
        res = gmres_solve(lambda v: a @ v, rhs, max_dim=3, tol=1e-14)
        assert isinstance(res, GmresResult)
        assert res.rel_residual > 0  # best effort, documented in the result


class TestJacobianVectorProduct:
    def test_linear_stub_exact(self):
        # A preserves the zero-sum subspace and is small enough that the
        # stub's image never clips, so its action is exactly linear
        rng = np.random.default_rng(4)
        n = 30
        mu_star = interior_normal(10, 3, n)
        mu = interior_normal(12, 3, n)

        def project(x):
            return x - x.mean(axis=0)

        raw = 0.0005 * rng.standard_normal((n, n))
        a = 0.4 * (np.eye(n) - np.full((n, n), 1.0 / n)) + project(project(raw).T).T
        ev = linear_evaluator(a, mu_star)
        v = rng.standard_normal(n)
        v -= v.mean()
        jv = jacobian_vector_product(mu, v, ev, 0, eps=1e-5)
        exact = a @ v
        exact -= exact.mean()
        assert np.abs(jv - exact).max() < 1e-6

    def test_zero_sum_output(self):
        n = 30
        mu = discretized_normal(10, 3, n)
        ev = linear_evaluator(0.3 * np.eye(n), discretized_normal(9, 3, n))
        v = np.zeros(n)
        v[5], v[15] = 1.0, -1.0
        jv = jacobian_vector_product(mu, v, ev, 0, eps=1e-4)
        assert abs(jv.sum()) <= 1e-10

    def test_first_order_epsilon_error(self):
        # smooth quadratic stub (zero-sum F by construction): halving
        # epsilon halves the finite-difference error
        n = 20
        mu_star = interior_normal(8, 2, n)
        mu = interior_normal(9, 2, n)

        def f_test(probs):
            dev = probs - mu_star.probs
            raw = 0.5 * dev + 2.0 * dev * dev
            return raw - raw.mean()

        def evaluator(m, seed):
            out = m.probs - f_test(m.probs)
            return DegreeDistribution(out / out.sum())

        v = np.zeros(n)
        v[8], v[12] = 1.0, -1.0
        errors = []
        for eps in (2e-3, 1e-3):
            jv = jacobian_vector_product(mu, v, evaluator, 0, eps=eps)
            exact = 0.5 * v + 4.0 * (mu.probs - mu_star.probs) * v
            exact = exact - exact.mean()
            errors.append(np.abs(jv - exact).max())
        assert errors[1] == pytest.approx(errors[0] / 2, rel=0.3)

    def test_bit_for_bit_self_consistency(self):
        # common random numbers: the stochastic evaluator is deterministic
        # within one seed, so identical calls agree exactly
        params = ModelParams(n=50, r=0.9, seed=8, time_unit="n")
        cfg = NewtonConfig(copies=40, timestepper_horizon=2.0)
        ev = make_evaluator(params, cfg)
        mu = discretized_normal(5, 2, 50)
        v = np.zeros(50)
        v[4], v[6] = 1.0, -1.0
        a = jacobian_vector_product(mu, v, ev, 31, eps=0.05)
        b = jacobian_vector_product(mu, v, ev, 31, eps=0.05)
        assert np.array_equal(a, b)

    def test_rejects_zero_direction(self):
        mu = discretized_normal(10, 3, 20)
        with pytest.raises(ValueError, match="non-zero"):
            jacobian_vector_product(mu, np.zeros(20), lambda m, s: m, 0, eps=0.1)


class TestCoarseTimestepper:
    def test_deterministic(self):
        params = ModelParams(n=50, r=0.9, seed=1, time_unit="n")
        mu = discretized_normal(5, 2, 50)
        a = coarse_timestepper(mu, 5.0, params, 60, seed=9)
        b = coarse_timestepper(mu, 5.0, params, 60, seed=9)
        assert np.array_equal(a.probs, b.probs)

    def test_zero_horizon_is_identity_for_point_mass(self):
        params = ModelParams(n=20, r=0.9, seed=2, time_unit="n")
        probs = np.zeros(20)
        probs[0] = 1.0
        mu = DegreeDistribution(probs)
        out = coarse_timestepper(mu, 1e-9, params, 40, seed=3)
        assert out.probs[0] == 1.0

    def test_residual_sums_to_zero(self):
        params = ModelParams(n=50, r=0.9, seed=3, time_unit="n")
        cfg = NewtonConfig(copies=50)
        ev = make_evaluator(params, cfg)
        f = residual(discretized_normal(5, 2, 50), ev, 7)
        assert abs(f.sum()) <= 1e-12

    def test_stationary_input_small_residual(self):
        # near-fixed-point residual dominated by sampling noise, 200 copies
        params = ModelParams(n=100, r=0.9, seed=4, time_unit="n")
        mu = discretized_normal(10, 3, 100)
        out = coarse_timestepper(mu, 10.0, params, 200, seed=11)
        assert l1_distance(mu, out) <= 0.08

    def test_matches_generator_path_statistically(self):
        # the batched ensemble kernel and the Generator-based trajectory
        # path implement the same chain: starting far from stationarity,
        # their pooled outputs agree to sampling accuracy
        from netcoarse.evolution import evolve, child_rng
        from netcoarse.liftrestrict import lift_distribution, restrict

        n, copies, horizon = 100, 400, 5.0
        params = ModelParams(n=n, r=0.9, seed=11, time_unit="n")
        mu0 = discretized_normal(25, 4, n)
        batched = coarse_timestepper(mu0, horizon, params, copies, seed=21)
        rng = child_rng(21, 99)
        lifted = lift_distribution(mu0, copies, rng)
        for g in lifted.graphs:
            evolve(g, params, horizon, rng)
        generator_path = restrict(lifted.graphs)
        assert l1_distance(batched, generator_path) <= 0.1
        assert abs(batched.mean() - generator_path.mean()) <= 0.25

    def test_far_state_large_residual(self):
        params = ModelParams(n=100, r=0.9, seed=5, time_unit="n")
        probs = np.zeros(100)
        probs[0] = 1.0
        cfg = NewtonConfig(copies=100)
        ev = make_evaluator(params, cfg)
        f = residual(DegreeDistribution(probs), ev, 13)
        assert np.abs(f).sum() > 0.5


class TestNoiseFloor:
    def test_deterministic_evaluator_floor_zero(self):
        n = 30
        ev = linear_evaluator(0.5 * np.eye(n), discretized_normal(10, 3, n))
        floor, fbar = noise_floor_estimate(
            discretized_normal(11, 3, n), ev, [1, 2, 3, 4, 5]
        )
        assert floor == pytest.approx(0.0, abs=1e-14)
        assert fbar > 0

    def test_stochastic_floor_positive(self):
        params = ModelParams(n=50, r=0.9, seed=6, time_unit="n")
        cfg = NewtonConfig(copies=40, timestepper_horizon=2.0)
        ev = make_evaluator(params, cfg)
        floor, _ = noise_floor_estimate(discretized_normal(5, 2, 50), ev, [1, 2, 3])
        assert floor > 0


class TestNewtonLoop:
    def test_linear_stub_single_iteration(self):
        n = 30
        mu_star = discretized_normal(10, 3, n)
        ev = linear_evaluator(0.6 * np.eye(n), mu_star)
        mu0 = discretized_normal(12, 3.5, n)
        params = ModelParams(n=n, r=0.9, seed=1)
        cfg = NewtonConfig(
            newton_tol=1e-12, gmres_tol=1e-13, gmres_dim=n, fd_epsilon=1e-4,
            damping_safety=1.0, max_newton_iters=5,
        )
        rep = newton_gmres(mu0, params, cfg, evaluator=ev)
        assert rep.converged
        assert rep.residual_norms[1] < 1e-10

    def test_already_converged_start(self):
        n = 30
        mu_star = discretized_normal(10, 3, n)
        ev = linear_evaluator(0.6 * np.eye(n), mu_star)
        params = ModelParams(n=n, r=0.9, seed=2)
        cfg = NewtonConfig(newton_tol=1e-9, max_newton_iters=5)
        rep = newton_gmres(mu_star, params, cfg, evaluator=ev)
        assert rep.converged
        assert len(rep.iterations) == 1

    def test_simplex_preserved_on_stochastic_problem(self):
        params = ModelParams(n=50, r=0.9, seed=3, time_unit="n")
        cfg = NewtonConfig(
            copies=60, timestepper_horizon=3.0, max_newton_iters=2, gmres_dim=6
        )
        mu0 = discretized_normal(8, 2, 50)
        iterates = []
        ev_inner = make_evaluator(params, cfg)

        def recording(mu, seed):
            iterates.append(mu)
            return ev_inner(mu, seed)

        rep = newton_gmres(mu0, params, cfg, evaluator=recording)
        for mu in iterates + [rep.mu]:
            assert mu.probs.min() >= 0.0
            assert abs(mu.probs.sum() - 1.0) <= 1e-10

    def test_stagnation_flagged(self):
        # a residual with no root: Phi(mu) = mu - c for a fixed zero-sum c,
        # so F is constant and no update can reduce it
        n = 20
        c = np.zeros(n)
        c[4], c[14] = 0.001, -0.001

        def evaluator(mu, seed):
            out = np.clip(mu.probs - c, 0.0, None)
            return DegreeDistribution(out / out.sum())

        params = ModelParams(n=n, r=0.9, seed=4)
        cfg = NewtonConfig(
            newton_tol=1e-14, max_newton_iters=8, gmres_dim=10, fd_epsilon=1e-3
        )
        mu0 = interior_normal(9, 3, n)
        rep = newton_gmres(mu0, params, cfg, evaluator=evaluator)
        assert rep.stagnated
        assert not rep.converged
