"""Anchored cocoercive solver: schedules, hand-evaluated recursions, the
potential's decrease, certified subgradients, and feasibility."""

import math

import numpy as np
import pytest

from halpern_vr.core import (
    DivergenceError,
    ProblemInstance,
    RngStream,
    residual_norm,
)
from halpern_vr.halpern_coco import (
    CocoHalpernConfig,
    anchor_weight,
    initial_step,
    potential,
    refresh_probability,
    run,
    step,
)
from halpern_vr.problems import (
    matrix_game_problem,
    policeman_burglar_matrix,
    synthetic_cocoercive,
)


def zero_problem(d=2):
    return ProblemInstance(
        n=1,
        d=d,
        eval_full=lambda u: np.zeros(d),
        eval_component=lambda i, u: np.zeros(d),
        resolvent=lambda eta, u: u,
        L=1.0,
        L_F=1.0,
    )


def scalar_identity_problem():
    """F(u) = u, G = 0: the hand-evaluated recursion fixture."""
    return ProblemInstance(
        n=1,
        d=1,
        eval_full=lambda u: u.copy(),
        eval_component=lambda i, u: u.copy(),
        resolvent=lambda eta, u: u,
        L=1.0,
        L_F=1.0,
        known_solution=np.zeros(1),
    )


class TestSchedules:
    def test_anchor_weight_values(self):
        assert anchor_weight(1) == pytest.approx(0.4, abs=0)
        assert anchor_weight(6) == pytest.approx(0.2, abs=0)

    def test_anchor_weight_decay(self):
        eps = 1e-3
        k = int(2 / eps - 4) + 1
        assert anchor_weight(k) < eps
        with pytest.raises(ValueError):
            anchor_weight(0)

    def test_refresh_probability_branches(self):
        assert refresh_probability(2, 16) == pytest.approx(4 / 7, abs=0)
        assert refresh_probability(10, 16) == pytest.approx(4 / 9, abs=0)
        for k in (1, 2, 50):
            assert refresh_probability(k, 1) == pytest.approx(4 / 6)
        with pytest.raises(ValueError):
            refresh_probability(0, 4)


class TestInitialStep:
    def test_zero_operator_keeps_start(self):
        problem = zero_problem()
        config = CocoHalpernConfig(L=1.0, seed=0)
        state = initial_step(problem, np.array([0.3, -0.4]), config)
        assert np.array_equal(state.u, np.array([0.3, -0.4]))
        assert state.counter.full_evals == 2
        assert state.counter.resolvent_calls == 1

    def test_scalar_hand_value(self):
        problem = scalar_identity_problem()
        config = CocoHalpernConfig(L=1.0, seed=0)
        state = initial_step(problem, np.array([1.0]), config)
        assert state.u[0] == 0.6875  # 1 - (5/16) * 1

    def test_starts_at_solution_stays(self):
        problem = scalar_identity_problem()
        config = CocoHalpernConfig(L=1.0, seed=0)
        state = initial_step(problem, np.zeros(1), config)
        assert state.u[0] == 0.0


class TestStep:
    def test_zero_operator_convex_combination(self):
        problem = zero_problem()
        config = CocoHalpernConfig(L=1.0, seed=0)
        state = initial_step(problem, np.array([1.0, 2.0]), config)
        u_before = state.u.copy()
        step(state, problem, config)
        lam = anchor_weight(1)
        expected = lam * state.u0 + (1 - lam) * u_before
        assert np.allclose(state.u, expected, atol=0)

    def test_scalar_hand_values(self):
        problem = scalar_identity_problem()
        config = CocoHalpernConfig(L=1.0, seed=0)
        state = initial_step(problem, np.array([1.0]), config)
        step(state, problem, config)
        assert state.u[0] == 0.640625  # 0.4 + 0.6*0.6875 - 0.25*0.6875

    def test_fixed_point(self):
        problem = scalar_identity_problem()
        config = CocoHalpernConfig(L=1.0, seed=3)
        state = initial_step(problem, np.zeros(1), config)
        for _ in range(5):
            step(state, problem, config)
        assert state.u[0] == 0.0


class TestPotential:
    def test_zero_at_solution_anchor(self):
        problem = scalar_identity_problem()
        config = CocoHalpernConfig(L=1.0, seed=0)
        state = initial_step(problem, np.zeros(1), config)
        assert potential(state, problem, config) == 0.0

    def test_variance_weight_small_case(self):
        # the third-term weight at k=1, n=4, L=1 equals (2+2)*5/4 = 5
        problem = synthetic_cocoercive(4, 2, 1.0, seed=0)
        config = CocoHalpernConfig(L=1.0, seed=0)
        state = initial_step(problem, np.ones(2), config)
        base = potential(state, problem, config)
        state.page.estimate = state.page.estimate + np.array([1.0, 0.0])
        bumped = potential(state, problem, config)
        assert bumped - base == pytest.approx(5.0, rel=1e-12)

    def test_exact_estimator_kills_third_term(self):
        problem = scalar_identity_problem()
        config = CocoHalpernConfig(L=1.0, seed=0)
        state = initial_step(problem, np.array([1.0]), config)
        for _ in range(20):
            step(state, problem, config)
            f = problem.eval_full(state.u)
            assert np.array_equal(f, state.page.estimate)

    def test_first_potential_nonpositive(self):
        for n, d, seed in [(1, 1, 0), (4, 3, 1), (8, 4, 2)]:
            problem = synthetic_cocoercive(n, d, 1.5, seed=seed)
            config = CocoHalpernConfig(L=1.5, seed=seed)
            state = initial_step(problem, RngStream(seed).normals(d), config)
            assert potential(state, problem, config) <= 1e-9

    def test_deterministic_decrease_scalar(self):
        problem = scalar_identity_problem()
        config = CocoHalpernConfig(L=1.0, max_iters=101, seed=0)
        state = initial_step(problem, np.array([1.0]), config)
        c_prev = potential(state, problem, config)
        for k in range(1, 101):
            lam = anchor_weight(k)
            step(state, problem, config)
            c_next = potential(state, problem, config)
            assert c_next <= (1 - lam) * c_prev + 1e-9 * (1 + abs(c_prev))
            c_prev = c_next

    def test_statistical_decrease(self):
        problem = synthetic_cocoercive(8, 4, 1.0, seed=5)
        u0 = RngStream(6).normals(4)
        n_seeds = 50
        values = np.zeros((n_seeds, 31))
        for s in range(n_seeds):
            config = CocoHalpernConfig(L=1.0, seed=s)
            state = initial_step(problem, u0, config)
            values[s, 0] = potential(state, problem, config)
            for k in range(1, 31):
                step(state, problem, config)
                values[s, k] = potential(state, problem, config)
        for k in range(1, 31):
            lam = anchor_weight(k)
            mean_next = values[:, k].mean()
            mean_prev = values[:, k - 1].mean()
            stderr = values[:, k].std(ddof=1) / math.sqrt(n_seeds)
            assert mean_next <= (1 - lam) * mean_prev + 3 * stderr


class TestRun:
    def test_single_iteration_trace(self):
        problem = scalar_identity_problem()
        config = CocoHalpernConfig(L=1.0, max_iters=1, seed=0)
        state, trace = run(problem, np.array([1.0]), config)
        assert len(trace) == 1
        assert trace[0].iteration == 1
        assert trace[0].residual == 0.6875

    def test_divergence_guard(self):
        d = 2

        def anti_monotone(u):
            return -3.0 * u

        problem = ProblemInstance(
            n=1,
            d=d,
            eval_full=anti_monotone,
            eval_component=lambda i, u: anti_monotone(u),
            resolvent=lambda eta, u: u,
            L=1.0,
            L_F=1.0,
        )
        config = CocoHalpernConfig(
            L=0.001, max_iters=3000, seed=0, divergence_factor=1e3
        )
        with pytest.raises(DivergenceError):
            run(problem, np.ones(d), config)

    def test_trace_seed_independent_when_estimator_exact(self):
        problem = synthetic_cocoercive(1, 1, 1.0, seed=0, u_star=np.zeros(1))
        traces = []
        for seed in (0, 1, 2):
            config = CocoHalpernConfig(L=1.0, max_iters=60, seed=seed)
            _, trace = run(problem, np.ones(1), config)
            traces.append([r.residual for r in trace])
        assert traces[0] == traces[1] == traces[2]

    def test_certified_subgradient_membership(self):
        A = policeman_burglar_matrix(5, 0.8, RngStream(8))
        problem = matrix_game_problem(A, sampling="uniform")
        config = CocoHalpernConfig(L=problem.L, max_iters=10, seed=1)
        state, _ = run(
            problem,
            np.concatenate([np.full(5, 0.2), np.full(5, 0.2)]),
            config,
        )
        redo = problem.resolvent(config.eta, state.u + config.eta * state.g)
        assert np.linalg.norm(redo - state.u) <= 1e-10

    def test_simplex_feasibility_of_iterates(self):
        A = policeman_burglar_matrix(6, 0.8, RngStream(9))
        problem = matrix_game_problem(A, sampling="uniform")
        config = CocoHalpernConfig(L=problem.L, max_iters=25, seed=4)
        state = initial_step(
            problem, np.concatenate([np.full(6, 1 / 6), np.full(6, 1 / 6)]), config
        )
        for _ in range(24):
            step(state, problem, config)
            x, y = state.u[:6], state.u[6:]
            assert np.all(x >= 0) and np.all(y >= 0)
            assert abs(x.sum() - 1.0) <= 1e-12
            assert abs(y.sum() - 1.0) <= 1e-12

    def test_epoch_budget_stops_run(self):
        problem = synthetic_cocoercive(8, 4, 1.0, seed=3)
        config = CocoHalpernConfig(L=1.0, max_iters=10_000, seed=0, epoch_budget=5.0)
        state, trace = run(problem, np.ones(4), config)
        assert state.counter.epochs >= 5.0
        assert state.counter.epochs < 8.0  # stops shortly after crossing

    def test_rate_envelope_statistical(self):
        # mean residual stays under 16 L ||u0 - u*|| / (k+4): quick version
        problem = synthetic_cocoercive(4, 3, 1.0, seed=11)
        u0 = np.zeros(3)
        dist0 = np.linalg.norm(u0 - problem.known_solution)
        residuals = []
        for seed in range(10):
            config = CocoHalpernConfig(L=1.0, max_iters=50, seed=seed)
            _, trace = run(problem, u0, config)
            residuals.append([r.residual for r in trace])
        mean = np.mean(residuals, axis=0)
        for k in range(1, 51):
            assert mean[k - 1] <= 16.0 * dist0 / (k + 4) * 1.05
