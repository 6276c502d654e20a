"""Shared numeric primitives: deterministic RNG, sampling, the finite-sum
problem model, residual arithmetic, and oracle-cost accounting.

Conventions used across the package:

* points are 1-d float64 numpy arrays; every public operation checks
  dimensions and rejects non-finite values,
* component indices are 0-based,
* one *epoch* of oracle cost equals one full-operator evaluation; a
  component evaluation costs ``component_cost`` epochs (``1/n`` unless the
  problem overrides it with its true cost ratio).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

Array = np.ndarray
Oracle = Callable[[Array], Array]
ComponentOracle = Callable[[int, Array], Array]
ResolventOracle = Callable[[float, Array], Array]


class DivergenceError(RuntimeError):
    """A solver iterate became non-finite or its residual blew up."""


def as_point(u, d: Optional[int] = None) -> Array:
    """Coerce to a finite float64 vector, optionally of dimension ``d``."""
    v = np.asarray(u, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d point, got shape {v.shape}")
    if d is not None and v.shape[0] != d:
        raise ValueError(f"dimension mismatch: expected {d}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("point contains non-finite coordinates")
    return v


def require_same_dim(a: Array, b: Array) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# Deterministic random stream
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_WEYL = 0x9E3779B97F4A7C15


class RngStream:
    """SplitMix64 random stream.

    The state is a 64-bit Weyl counter (increment 0x9E3779B97F4A7C15); each
    output passes the counter through the SplitMix64 finalizer.  The
    algorithm is fixed by this implementation rather than delegated to a
    platform library, so identical seeds produce identical draw sequences
    everywhere.  Uniforms take the top 53 bits; normals use the cosine
    branch of the Box-Muller transform.
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _WEYL) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def randbelow(self, n: int) -> int:
        """Unbiased integer in {0, ..., n-1} via bitmask rejection."""
        if n < 1:
            raise ValueError("randbelow requires n >= 1")
        if n == 1:
            return 0
        k = (n - 1).bit_length()
        while True:
            r = self.next_u64() >> (64 - k)
            if r < n:
                return r

    def normal(self) -> float:
        """Standard normal draw, Box-Muller cosine branch (2 uniforms)."""
        u1 = (self.next_u64() >> 11) * 2.0 ** -53
        u2 = (self.next_u64() >> 11) * 2.0 ** -53
        # shift u1 into (0, 1] so the log is finite
        return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, size: int) -> Array:
        return np.array([self.normal() for _ in range(size)], dtype=np.float64)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplingDistribution:
    """Categorical weights q_0..q_{n-1} over the components.

    Weights must be nonnegative and sum to 1 within 1e-12.  Zero weights are
    allowed at the type level (degenerate masses are valid sampling
    targets); constructions that divide by q_i validate positivity
    themselves.
    """

    weights: Array
    _cumulative: Array = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a nonempty 1-d array")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1 within 1e-12")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_cumulative", np.cumsum(w))

    @property
    def n(self) -> int:
        return self.weights.size

    @staticmethod
    def uniform(n: int) -> "SamplingDistribution":
        if n < 1:
            raise ValueError("n must be >= 1")
        return SamplingDistribution(np.full(n, 1.0 / n))


def sample_categorical(q: SamplingDistribution, rng: RngStream) -> int:
    """Draw index i with P[i] = q_i."""
    u = rng.uniform()
    idx = int(np.searchsorted(q._cumulative, u, side="right"))
    return min(idx, q.n - 1)


def sample_batch_without_replacement(n: int, b: int, rng: RngStream) -> Array:
    """Uniform size-b subset of {0, ..., n-1}, returned as a sorted array.

    Uses Floyd's subset-sampling algorithm (b bounded draws, no O(n)
    shuffle); every size-b subset has equal probability.  Sorted output
    fixes the floating-point accumulation order downstream.
    """
    if b < 1 or b > n:
        raise ValueError(f"batch size must satisfy 1 <= b <= n, got b={b}, n={n}")
    chosen = set()
    for t in range(n - b, n):
        r = rng.randbelow(t + 1)
        chosen.add(t if r in chosen else r)
    return np.array(sorted(chosen), dtype=np.int64)


def bernoulli(p: float, rng: RngStream) -> bool:
    """True with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    return rng.uniform() < p


# ---------------------------------------------------------------------------
# Oracle-cost accounting
# ---------------------------------------------------------------------------


class EvalCounter:
    """Weighted oracle-call counts for one solver run.

    ``component_evals`` accumulates component calls in uniform-equivalent
    units (one unit = 1/n epoch), so ``epochs = component_evals/n +
    full_evals``.  Problems with a non-generic cost ratio charge
    ``n * component_cost`` units per call.  Metric-only evaluations made for
    logging are never charged.
    """

    __slots__ = ("n", "component_evals", "full_evals", "resolvent_calls")

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = n
        self.component_evals = 0.0
        self.full_evals = 0
        self.resolvent_calls = 0

    def add_component(self, units: float) -> None:
        if units < 0:
            raise ValueError("counter increments must be nonnegative")
        self.component_evals += units

    def add_full(self, count: int = 1) -> None:
        if count < 0:
            raise ValueError("counter increments must be nonnegative")
        self.full_evals += count

    def add_resolvent(self, count: int = 1) -> None:
        if count < 0:
            raise ValueError("counter increments must be nonnegative")
        self.resolvent_calls += count

    @property
    def epochs(self) -> float:
        return self.component_evals / self.n + self.full_evals


# ---------------------------------------------------------------------------
# Problem model
# ---------------------------------------------------------------------------


@dataclass
class ProblemInstance:
    """A finite-sum inclusion 0 in F(u) + G(u) with F = (1/n) sum_i F_i.

    ``eval_component`` is the plain family satisfying (1/n) sum_i F_i = F;
    ``eval_weighted_component`` is the Q-weighted oracle with
    E_{i~sampling}[F^Q_i] = F, used by solvers that reweight draws.  For
    uniform sampling the two coincide (the default derives the weighted
    oracle as F_i / (n q_i)).

    ``affine`` optionally holds (M, c) with F(u) = M u + c, enabling exact
    resolvents in tests.  ``metric`` optionally maps a point to the
    benchmark residual value logged for this problem.
    """

    n: int
    d: int
    eval_full: Oracle
    eval_component: ComponentOracle
    resolvent: ResolventOracle
    L: float
    L_F: float
    known_solution: Optional[Array] = None
    component_cost: Optional[float] = None
    sampling: Optional[SamplingDistribution] = None
    eval_weighted_component: Optional[ComponentOracle] = None
    affine: Optional[Tuple[Array, Array]] = None
    metric: Optional[Callable[[Array], float]] = None
    name: str = "problem"

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if self.L <= 0 or self.L_F <= 0:
            raise ValueError("Lipschitz constants must be positive")
        if self.component_cost is None:
            self.component_cost = 1.0 / self.n
        if self.component_cost <= 0:
            raise ValueError("component_cost must be positive")
        if self.sampling is None:
            self.sampling = SamplingDistribution.uniform(self.n)
        if self.sampling.n != self.n:
            raise ValueError("sampling distribution size differs from n")
        if self.eval_weighted_component is None:
            plain, nq = self.eval_component, self.n * self.sampling.weights

            def _weighted(i: int, u: Array) -> Array:
                return plain(i, u) / nq[i]

            self.eval_weighted_component = _weighted
        if self.known_solution is not None:
            self.known_solution = as_point(self.known_solution, self.d)

    @property
    def component_units(self) -> float:
        """Counter units charged per component call (n * component_cost)."""
        return self.n * self.component_cost

    @property
    def effective_n(self) -> int:
        """Cost-effective component count: how many component calls make one
        epoch, Cost(F)/Cost(F_i) = 1/component_cost.  Equals n generically;
        matrix-structured problems are smaller (2 m1 m2 / (m1 + m2)).
        Schedules calibrated by oracle cost use this count."""
        return max(1, round(1.0 / self.component_cost))

    def counter(self) -> EvalCounter:
        return EvalCounter(self.n)


def residual_norm(f_value: Array, g_value: Array) -> float:
    """Euclidean norm of F(u) + g(u) for a certified g(u) in G(u)."""
    f = as_point(f_value)
    g = as_point(g_value)
    require_same_dim(f, g)
    return float(np.linalg.norm(f + g))


def forward_backward_residual(problem: ProblemInstance, u: Array, eta: float) -> float:
    """Certified residual at the forward-backward point of u with step eta.

    Computes ubar = J_{eta G}(u - eta F(u)) and the induced
    g = (u - eta F(u) - ubar)/eta in G(ubar), returning ||F(ubar) + g||.
    Metric-only: callers do not charge these evaluations.
    """
    u = as_point(u, problem.d)
    z = u - eta * problem.eval_full(u)
    ubar = problem.resolvent(eta, z)
    g = (z - ubar) / eta
    return residual_norm(problem.eval_full(ubar), g)


# ---------------------------------------------------------------------------
# Trace records
# ---------------------------------------------------------------------------


@dataclass
class TraceRecord:
    """One per-iteration log row: oracle cost is cumulative epochs."""

    iteration: int
    oracle_epochs: float
    residual: float
    elapsed_ms: float


# ---------------------------------------------------------------------------
# Probe helpers (used by property tests on every shipped instance)
# ---------------------------------------------------------------------------


def finite_sum_gap(problem: ProblemInstance, u: Array) -> float:
    """|| (1/n) sum_i F_i(u) - F(u) || at one probe point."""
    u = as_point(u, problem.d)
    total = np.zeros(problem.d)
    for i in range(problem.n):
        total += problem.eval_component(i, u)
    return float(np.linalg.norm(total / problem.n - problem.eval_full(u)))


def resolvent_expansion_ratio(
    problem: ProblemInstance, eta: float, a: Array, b: Array
) -> float:
    """||J(a) - J(b)|| / ||a - b|| on one probe pair (<= 1 for monotone G)."""
    a = as_point(a, problem.d)
    b = as_point(b, problem.d)
    gap = float(np.linalg.norm(a - b))
    if gap == 0.0:
        return 0.0
    ja = problem.resolvent(eta, a)
    jb = problem.resolvent(eta, b)
    return float(np.linalg.norm(ja - jb)) / gap
