"""Primitives: RNG determinism, sampling laws, residual arithmetic,
oracle-cost accounting, and problem-instance probes."""

import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halpern_vr.core import (
    EvalCounter,
    ProblemInstance,
    RngStream,
    SamplingDistribution,
    as_point,
    bernoulli,
    finite_sum_gap,
    residual_norm,
    resolvent_expansion_ratio,
    sample_batch_without_replacement,
    sample_categorical,
)
from halpern_vr.problems import matrix_game_problem, synthetic_affine, synthetic_cocoercive


class TestRngStream:
    def test_equal_seeds_identical_draws(self):
        a, b = RngStream(123456789), RngStream(123456789)
        assert [a.next_u64() for _ in range(10_000)] == [
            b.next_u64() for _ in range(10_000)
        ]

    def test_different_seeds_differ(self):
        a, b = RngStream(1), RngStream(2)
        assert [a.next_u64() for _ in range(16)] != [b.next_u64() for _ in range(16)]

    def test_uniform_range(self):
        rng = RngStream(7)
        draws = [rng.uniform() for _ in range(10_000)]
        assert all(0.0 <= u < 1.0 for u in draws)
        assert abs(np.mean(draws) - 0.5) < 0.02

    def test_randbelow_bounds(self):
        rng = RngStream(3)
        assert rng.randbelow(1) == 0
        draws = [rng.randbelow(7) for _ in range(5_000)]
        assert set(draws) == set(range(7))

    def test_normal_moments(self):
        rng = RngStream(11)
        z = rng.normals(20_000)
        assert abs(z.mean()) < 0.03
        assert abs(z.std() - 1.0) < 0.03


class TestSampling:
    def test_exhaustive_batch(self):
        rng = RngStream(0)
        assert sample_batch_without_replacement(3, 3, rng).tolist() == [0, 1, 2]
        assert sample_batch_without_replacement(1, 1, rng).tolist() == [0]

    def test_batch_argument_validation(self):
        rng = RngStream(0)
        with pytest.raises(ValueError):
            sample_batch_without_replacement(3, 4, rng)
        with pytest.raises(ValueError):
            sample_batch_without_replacement(3, 0, rng)

    def test_batch_subset_frequencies_uniform(self):
        # every size-2 subset of {0..3} should appear with frequency 1/6
        rng = RngStream(2024)
        counts = {frozenset(s): 0 for s in combinations(range(4), 2)}
        draws = 100_000
        for _ in range(draws):
            counts[frozenset(sample_batch_without_replacement(4, 2, rng).tolist())] += 1
        for subset, count in counts.items():
            assert abs(count / draws - 1 / 6) < 0.01, (subset, count)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 30), st.integers(0, 2**63), st.data())
    def test_batch_always_valid(self, n, seed, data):
        b = data.draw(st.integers(1, n))
        batch = sample_batch_without_replacement(n, b, RngStream(seed))
        assert len(batch) == b
        assert len(set(batch.tolist())) == b
        assert batch.min() >= 0 and batch.max() < n
        assert list(batch) == sorted(batch)

    def test_categorical_point_mass(self):
        rng = RngStream(5)
        single = SamplingDistribution(np.array([1.0]))
        assert all(sample_categorical(single, rng) == 0 for _ in range(100))
        degenerate = SamplingDistribution(np.array([1.0, 0.0, 0.0]))
        assert all(sample_categorical(degenerate, rng) == 0 for _ in range(1_000))

    def test_categorical_frequencies(self):
        rng = RngStream(17)
        q = SamplingDistribution(np.array([0.5, 0.5]))
        draws = 100_000
        ones = sum(sample_categorical(q, rng) for _ in range(draws))
        assert abs(ones / draws - 0.5) < 0.01

    def test_bernoulli(self):
        rng = RngStream(23)
        assert bernoulli(1.0, rng) is True
        assert bernoulli(0.0, rng) is False
        draws = 100_000
        mean = sum(bernoulli(0.25, rng) for _ in range(draws)) / draws
        assert abs(mean - 0.25) < 0.01
        with pytest.raises(ValueError):
            bernoulli(1.5, rng)
        with pytest.raises(ValueError):
            bernoulli(-0.1, rng)


class TestSamplingDistribution:
    def test_sum_validation(self):
        with pytest.raises(ValueError):
            SamplingDistribution(np.array([0.5, 0.5 + 1e-9]))
        with pytest.raises(ValueError):
            SamplingDistribution(np.array([-0.1, 1.1]))
        SamplingDistribution(np.array([0.5, 0.5 + 1e-14]))  # within tolerance

    def test_uniform(self):
        q = SamplingDistribution.uniform(4)
        assert np.allclose(q.weights, 0.25)
        assert q.n == 4


class TestResidualNorm:
    def test_exact_stationarity(self):
        f = np.array([1.0, -2.0])
        assert residual_norm(f, -f) == 0.0

    def test_three_four_five(self):
        assert residual_norm(np.array([3.0, 0.0]), np.array([0.0, 4.0])) == 5.0

    def test_against_explicit_loop(self):
        rng = RngStream(31)
        f = rng.normals(9)
        g = rng.normals(9)
        acc = 0.0
        for fi, gi in zip(f, g):
            acc += (fi + gi) * (fi + gi)
        assert abs(residual_norm(f, g) - math.sqrt(acc)) <= 1e-15 * (1 + math.sqrt(acc))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            residual_norm(np.zeros(2), np.zeros(3))


class TestEvalCounter:
    def test_epochs_formula(self):
        c = EvalCounter(8)
        c.add_component(4.0)
        c.add_full(2)
        c.add_resolvent()
        assert c.epochs == 4.0 / 8 + 2
        assert c.resolvent_calls == 1

    def test_additive_across_phases(self):
        c = EvalCounter(5)
        c.add_component(5.0)  # phase one
        first = c.epochs
        c.add_full(1)  # phase two
        assert c.epochs == first + 1.0

    def test_nondecreasing(self):
        c = EvalCounter(3)
        with pytest.raises(ValueError):
            c.add_component(-1.0)
        with pytest.raises(ValueError):
            c.add_full(-1)


class TestPointValidation:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            as_point(np.array([1.0, np.nan]))
        with pytest.raises(ValueError):
            as_point(np.array([np.inf]))

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            as_point(np.zeros(3), d=2)


@pytest.fixture(scope="module")
def instances():
    from halpern_vr.problems import ouyang_xu_problem, policeman_burglar_matrix

    game = matrix_game_problem(
        policeman_burglar_matrix(6, 0.8, RngStream(4)), sampling="importance"
    )
    return [
        synthetic_cocoercive(5, 3, 2.0, seed=1),
        synthetic_affine(4, 6, 1.0, seed=2),
        ouyang_xu_problem(6),
        game,
    ]


class TestProblemInstanceProbes:

    def test_finite_sum_consistency(self, instances):
        rng = RngStream(123)
        for problem in instances:
            for _ in range(100):
                u = rng.normals(problem.d)
                f_norm = float(np.linalg.norm(problem.eval_full(u)))
                assert finite_sum_gap(problem, u) <= 1e-10 * (1.0 + f_norm)

    def test_resolvent_nonexpansive(self, instances):
        rng = RngStream(321)
        for problem in instances:
            for _ in range(100):
                a = rng.normals(problem.d)
                b = rng.normals(problem.d)
                assert resolvent_expansion_ratio(problem, 0.7, a, b) <= 1.0 + 1e-12

    def test_full_constant_no_larger_than_expected_constant(self, instances):
        for problem in instances:
            assert problem.L_F <= problem.L * (1.0 + 1e-12)

    def test_weighted_component_unbiased(self, instances):
        rng = RngStream(55)
        for problem in instances:
            if problem.n > 40:
                continue
            u = rng.normals(problem.d)
            mean = np.zeros(problem.d)
            for i in range(problem.n):
                mean += problem.sampling.weights[i] * problem.eval_weighted_component(i, u)
            f = problem.eval_full(u)
            assert np.linalg.norm(mean - f) <= 1e-10 * (1.0 + np.linalg.norm(f))
