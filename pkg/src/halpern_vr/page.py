"""Recursive variance-reduced operator estimator (PAGE).

The estimator keeps a running value F~(u) anchored at the iterate it was
last formed at.  Each update either recomputes the full operator (with the
given probability) or applies a minibatch increment

    F~(u') = F~(u) + (1/b) sum_{i in S} (F_i(u') - F_i(u)),

with S a uniform without-replacement batch of size b.  Exhaustive
enumeration oracles for small instances live here as well; they are used
only by tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Tuple

import numpy as np

from .core import (
    Array,
    EvalCounter,
    ProblemInstance,
    RngStream,
    as_point,
    bernoulli,
    sample_batch_without_replacement,
)

# exhaustive enumeration stays cheap below these sizes
_MAX_ENUM_N = 8
_MAX_ENUM_BATCHES = 70


@dataclass
class PageState:
    """Current estimate F~(anchor) plus the anchor it was formed at."""

    estimate: Array
    anchor: Array
    batch_size: int

    def __post_init__(self):
        self.estimate = as_point(self.estimate)
        self.anchor = as_point(self.anchor)
        if self.estimate.shape != self.anchor.shape:
            raise ValueError("estimate and anchor dimensions differ")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def default_batch_size(n: int) -> int:
    """ceil(sqrt(n)), the batch size the anchored solver uses."""
    return int(math.ceil(math.sqrt(n)))


def init_full(
    problem: ProblemInstance,
    u: Array,
    counter: EvalCounter,
    batch_size: int | None = None,
) -> PageState:
    """Fresh state with estimate = F(u); charges one full evaluation."""
    u = as_point(u, problem.d)
    counter.add_full()
    b = default_batch_size(problem.n) if batch_size is None else batch_size
    if b > problem.n:
        raise ValueError("batch size exceeds component count")
    return PageState(estimate=problem.eval_full(u), anchor=u.copy(), batch_size=b)


def update(
    state: PageState,
    problem: ProblemInstance,
    u_next: Array,
    p: float,
    rng: RngStream,
    counter: EvalCounter,
) -> PageState:
    """Advance the estimator to the new iterate.

    The batch is drawn before the branch coin (matching the update's
    statement order), so the draw sequence is fixed regardless of which
    branch is taken.  The incremental branch evaluates each selected
    component at both points, costing 2b component calls; the full branch
    costs one full evaluation.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    u_next = as_point(u_next, problem.d)
    if u_next.shape != state.anchor.shape:
        raise ValueError("iterate dimension differs from estimator anchor")

    b = state.batch_size
    batch = sample_batch_without_replacement(problem.n, b, rng)
    if bernoulli(p, rng):
        counter.add_full()
        estimate = problem.eval_full(u_next)
    else:
        counter.add_component(2 * b * problem.component_units)
        delta = np.zeros(problem.d)
        for i in batch:
            delta += problem.eval_component(int(i), u_next)
            delta -= problem.eval_component(int(i), state.anchor)
        estimate = state.estimate + delta / b
    return PageState(estimate=estimate, anchor=u_next.copy(), batch_size=b)


def enumerate_update_moments(
    state: PageState,
    problem: ProblemInstance,
    u_next: Array,
    p: float,
) -> Tuple[Array, float]:
    """Exact mean and error second moment of one update, by enumeration.

    Walks every (branch, batch) outcome with its probability and returns
    (E[F~_new], E||F~_new - F(u_next)||^2).  Only feasible on small
    instances (n <= 8 and C(n, b) <= 70).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    u_next = as_point(u_next, problem.d)
    n, b = problem.n, state.batch_size
    n_batches = math.comb(n, b)
    if n > _MAX_ENUM_N or n_batches > _MAX_ENUM_BATCHES:
        raise ValueError(f"instance too large to enumerate (n={n}, C(n,b)={n_batches})")

    f_next = problem.eval_full(u_next)
    diffs = [
        problem.eval_component(i, u_next) - problem.eval_component(i, state.anchor)
        for i in range(n)
    ]

    mean = p * f_next
    second_moment = 0.0  # the full branch contributes zero error
    batch_prob = (1.0 - p) / n_batches
    for batch in combinations(range(n), b):
        est = state.estimate + sum(diffs[i] for i in batch) / b
        mean = mean + batch_prob * est
        second_moment += batch_prob * float(np.linalg.norm(est - f_next) ** 2)
    return mean, second_moment


def variance_recursion_bound(
    state: PageState,
    problem: ProblemInstance,
    u_next: Array,
    p: float,
) -> float:
    """Upper bound on E||F~_new - F(u_next)||^2 given the current state:

        (1-p) ||F~ - F(anchor)||^2
        + (1-p) (n-b)/(b(n-1)) * (1/n) sum_i ||F_i(u_next) - F_i(anchor)||^2.

    The without-replacement factor is defined as 0 when n = 1 (the
    single-component estimator is exact).
    """
    u_next = as_point(u_next, problem.d)
    n, b = problem.n, state.batch_size
    carried = float(
        np.linalg.norm(state.estimate - problem.eval_full(state.anchor)) ** 2
    )
    if n == 1:
        return (1.0 - p) * carried
    spread = 0.0
    for i in range(n):
        di = problem.eval_component(i, u_next) - problem.eval_component(i, state.anchor)
        spread += float(np.linalg.norm(di) ** 2)
    factor = (n - b) / (b * (n - 1.0))
    return (1.0 - p) * carried + (1.0 - p) * factor * spread / n
