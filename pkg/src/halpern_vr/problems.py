"""Benchmark problem instances: a policeman-burglar matrix game on the
product of simplices, the worst-case-style quadratic saddle program, and
synthetic instances with known solutions used by verification suites.

Block convention for two-player problems: u = (x; y) with x in R^{m2}
(one coordinate per column of the payoff/constraint matrix A in
R^{m1 x m2}) and y in R^{m1}, so that F(u) = (A^T y; -A x) typechecks.
All shipped experiments use square A, where the distinction is moot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    Array,
    ProblemInstance,
    RngStream,
    SamplingDistribution,
    as_point,
)


# ---------------------------------------------------------------------------
# Simplex projection
# ---------------------------------------------------------------------------


def project_simplex(v: Array) -> Array:
    """Euclidean projection onto {x >= 0, sum x = 1}.

    Sort-based O(m log m) rule: with the entries sorted decreasingly, find
    the largest k with s_k > (cumsum_k - 1)/k, shift by that threshold and
    clip.  A final renormalizing subtraction over the support removes the
    last float ulp of the sum constraint.
    """
    v = as_point(v)
    s = np.sort(v)[::-1]
    css = np.cumsum(s) - 1.0
    ks = np.arange(1, v.size + 1)
    mask = s > css / ks
    k = int(np.nonzero(mask)[0][-1]) + 1  # at least one index always qualifies
    theta = css[k - 1] / k
    x = np.maximum(v - theta, 0.0)
    support = x > 0
    x[support] -= (x.sum() - 1.0) / support.sum()
    return np.maximum(x, 0.0)


# ---------------------------------------------------------------------------
# Matrix game on a product of simplices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatrixGame:
    """Bilinear game min_x max_y <A x, y> over Delta x Delta."""

    A: Array

    @property
    def m1(self) -> int:
        return self.A.shape[0]

    @property
    def m2(self) -> int:
        return self.A.shape[1]

    def split(self, u: Array):
        x = u[: self.m2]
        y = u[self.m2 :]
        return x, y

    def operator(self, u: Array) -> Array:
        x, y = self.split(u)
        return np.concatenate([self.A.T @ y, -(self.A @ x)])


def policeman_burglar_matrix(m: int, theta: float, rng: RngStream) -> Array:
    """m x m payoff with entries z_i (1 - exp(-theta |i - j|)), z ~ N(0, I).

    The z vector is drawn once from the given stream, so a fixed seed
    reproduces the matrix bit for bit.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    z = rng.normals(m)
    idx = np.arange(m)
    gaps = np.abs(idx[:, None] - idx[None, :])
    return z[:, None] * (1.0 - np.exp(-theta * gaps))


def gradient_mapping_norm(game: MatrixGame, u: Array) -> float:
    """Projected-step displacement used as the constrained residual metric:

        sqrt(||x - P(x - A^T y)||^2 + ||y - P(y + A x)||^2)

    with P the simplex projection applied per block.
    """
    u = as_point(u, game.m1 + game.m2)
    x, y = game.split(u)
    gx = x - project_simplex(x - game.A.T @ y)
    gy = y - project_simplex(y + game.A @ x)
    return math.sqrt(float(gx @ gx) + float(gy @ gy))


def spectral_norm_power_iteration(A: Array, iters: int = 100) -> float:
    """||A||_2 estimated by power iteration on A^T A (relative accuracy
    around 1e-6 on the benchmark matrices; deterministic start vector)."""
    m2 = A.shape[1]
    gram = A.T @ A
    v = np.full(m2, 1.0 / math.sqrt(m2))
    lam = 0.0
    for _ in range(iters):
        w = gram @ v
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return math.sqrt(lam)


def matrix_game_problem(A: Array, sampling: str = "uniform") -> ProblemInstance:
    """Finite-sum instance of the matrix game.

    Components are indexed by flattened pairs xi = (i, j) (row i, column j),
    n = m1 * m2.  The plain family is (m1 y_i A_{i:}; -m2 x_j A_{:j}) so its
    uniform average is F; the weighted oracle divides by the marginal
    probabilities instead (importance weights ||A_{i:}||^2/||A||_F^2 and
    ||A_{:j}||^2/||A||_F^2), which keeps E_Q[F_xi] = F.  One pair
    evaluation touches one row and one column, so the cost ratio is
    (m1 + m2) / (2 m1 m2).
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("A must be a matrix")
    m1, m2 = A.shape
    game = MatrixGame(A)
    n = m1 * m2
    d = m1 + m2
    fro2 = float(np.sum(A * A))

    row_norms2 = np.sum(A * A, axis=1)
    col_norms2 = np.sum(A * A, axis=0)
    if sampling == "importance":
        if fro2 == 0.0 or np.any(row_norms2 == 0.0) or np.any(col_norms2 == 0.0):
            raise ValueError("importance sampling requires nonzero rows and columns")
        q_row = row_norms2 / fro2
        q_col = col_norms2 / fro2
        L = math.sqrt(fro2)
    elif sampling == "uniform":
        q_row = np.full(m1, 1.0 / m1)
        q_col = np.full(m2, 1.0 / m2)
        L = math.sqrt(max(m1 * float(row_norms2.max()), m2 * float(col_norms2.max())))
    else:
        raise ValueError("sampling must be 'uniform' or 'importance'")

    joint = np.outer(q_row, q_col).reshape(-1)
    # guard the last float ulp of the product weights
    joint = joint / joint.sum()

    def eval_full(u: Array) -> Array:
        return game.operator(u)

    def eval_component(idx: int, u: Array) -> Array:
        i, j = divmod(idx, m2)
        x, y = game.split(u)
        return np.concatenate([m1 * y[i] * A[i, :], -m2 * x[j] * A[:, j]])

    def eval_weighted(idx: int, u: Array) -> Array:
        i, j = divmod(idx, m2)
        x, y = game.split(u)
        return np.concatenate(
            [(y[i] / q_row[i]) * A[i, :], -(x[j] / q_col[j]) * A[:, j]]
        )

    def resolvent(eta: float, u: Array) -> Array:
        x = u[:m2]
        y = u[m2:]
        return np.concatenate([project_simplex(x), project_simplex(y)])

    return ProblemInstance(
        n=n,
        d=d,
        eval_full=eval_full,
        eval_component=eval_component,
        resolvent=resolvent,
        L=L,
        L_F=spectral_norm_power_iteration(A),
        component_cost=(m1 + m2) / (2.0 * m1 * m2),
        sampling=SamplingDistribution(joint),
        eval_weighted_component=eval_weighted,
        metric=lambda u: gradient_mapping_norm(game, u),
        name="matrix-game",
    )


def feasible_start(m1: int, m2: int) -> Array:
    """Barycenters of both simplices: the conventional game start point."""
    return np.concatenate([np.full(m2, 1.0 / m2), np.full(m1, 1.0 / m1)])


# ---------------------------------------------------------------------------
# Quadratic saddle program (worst-case-style bilinear coupling)
# ---------------------------------------------------------------------------


def _expected_lipschitz_affine(jacobians) -> float:
    """Exact expected-Lipschitz modulus of an affine family under uniform
    sampling: sqrt(lambda_max((1/n) sum_i J_i^T J_i))."""
    n = len(jacobians)
    d = jacobians[0].shape[0]
    s = np.zeros((d, d))
    for j in jacobians:
        s += j.T @ j
    s /= n
    return math.sqrt(max(float(np.linalg.eigvalsh(s)[-1]), 0.0))


def ouyang_xu_problem(m: int) -> ProblemInstance:
    """Unconstrained saddle of (1/2) x^T H x - h^T x - <A x - b, y> with the
    anti-bidiagonal A (entries +-1/4), H = 2 A^T A, b = (1/4) 1 and h the
    last basis vector over 4.  F(u) = (H x - h - A^T y; A x - b), G = 0.

    Row i gives component i of the finite sum (n = m):
        F_i(u) = (2n A_i (A_i . x) - h - n y_i A_i; n (A_i . x) e_i - b).
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    n = m
    d = 2 * m
    A = np.zeros((m, m))
    for i in range(m):
        A[i, m - 1 - i] = 0.25
        if i <= m - 2:
            A[i, m - 2 - i] = -0.25
    H = 2.0 * A.T @ A
    b = np.full(m, 0.25)
    h = np.zeros(m)
    h[m - 1] = 0.25

    def eval_full(u: Array) -> Array:
        x = u[:m]
        y = u[m:]
        return np.concatenate([H @ x - h - A.T @ y, A @ x - b])

    def eval_component(i: int, u: Array) -> Array:
        x = u[:m]
        y = u[m:]
        ai = A[i, :]
        aix = float(ai @ x)
        top = 2.0 * n * aix * ai - h - n * y[i] * ai
        bottom = -b.copy()
        bottom[i] += n * aix
        return np.concatenate([top, bottom])

    def resolvent(eta: float, u: Array) -> Array:
        return u

    # full jacobian [[H, -A^T], [A, 0]] and the component jacobians
    J = np.zeros((d, d))
    J[:m, :m] = H
    J[:m, m:] = -A.T
    J[m:, :m] = A
    jacobians = []
    for i in range(m):
        Ji = np.zeros((d, d))
        Ji[:m, :m] = 2.0 * n * np.outer(A[i, :], A[i, :])
        Ji[:m, m + i] = -n * A[i, :]
        Ji[m + i, :m] = n * A[i, :]
        jacobians.append(Ji)

    x_star = np.linalg.solve(A, b)
    y_star = np.linalg.solve(A.T, H @ x_star - h)

    return ProblemInstance(
        n=n,
        d=d,
        eval_full=eval_full,
        eval_component=eval_component,
        resolvent=resolvent,
        L=_expected_lipschitz_affine(jacobians),
        L_F=float(np.linalg.norm(J, 2)),
        known_solution=np.concatenate([x_star, y_star]),
        affine=(J, np.concatenate([-h, -b])),
        metric=lambda u: float(np.linalg.norm(eval_full(u))),
        name="ouyang-xu",
    )


# ---------------------------------------------------------------------------
# Synthetic instances with known solutions
# ---------------------------------------------------------------------------


def synthetic_cocoercive(
    n: int,
    d: int,
    L_target: float,
    seed: int = 0,
    u_star: Optional[Array] = None,
) -> ProblemInstance:
    """Average-cocoercive instance with a constructed root.

    Components F_i(u) = Q_i (u - u*) with Q_i = B_i^T B_i symmetric PSD,
    jointly rescaled so max_i lambda_max(Q_i) = L_target; each F_i is then
    1/lambda_max(Q_i)-cocoercive, so the family is cocoercive on average
    with modulus L_target.
    """
    if n < 1 or d < 1 or L_target <= 0:
        raise ValueError("n, d must be positive and L_target > 0")
    rng = RngStream(seed)
    mats = []
    for _ in range(n):
        B = rng.normals(d * d).reshape(d, d)
        mats.append(B.T @ B)
    top = max(float(np.linalg.eigvalsh(Q)[-1]) for Q in mats)
    scale = L_target / top
    mats = [Q * scale for Q in mats]
    q_bar = np.mean(np.stack(mats), axis=0)
    star = rng.normals(d) if u_star is None else as_point(u_star, d)

    def eval_full(u: Array) -> Array:
        return q_bar @ (u - star)

    def eval_component(i: int, u: Array) -> Array:
        return mats[i] @ (u - star)

    return ProblemInstance(
        n=n,
        d=d,
        eval_full=eval_full,
        eval_component=eval_component,
        resolvent=lambda eta, u: u,
        L=L_target,
        L_F=float(np.linalg.eigvalsh(q_bar)[-1]),
        known_solution=star,
        affine=(q_bar, -(q_bar @ star)),
        metric=lambda u: float(np.linalg.norm(q_bar @ (u - star))),
        name="synthetic-cocoercive",
    )


def synthetic_affine(
    n: int,
    d: int,
    mu: float,
    seed: int = 0,
    spread: float = 0.5,
) -> ProblemInstance:
    """Affine monotone instance F_i(u) = M_i u + c_i with known solution.

    The mean M = mu I + skew + PSD has symmetric part bounded below by mu
    (so mu = 0 gives a merely monotone operator); component deviations are
    centered so (1/n) sum F_i = F exactly up to float accumulation.
    """
    if n < 1 or d < 1 or mu < 0:
        raise ValueError("n, d must be positive and mu >= 0")
    rng = RngStream(seed)
    R = rng.normals(d * d).reshape(d, d)
    K = (R - R.T) / 2.0
    C = rng.normals(d * d).reshape(d, d)
    P = (C.T @ C) / d
    M = mu * np.eye(d) + K + P

    devs = [spread * rng.normals(d * d).reshape(d, d) for _ in range(n)]
    dev_mean = np.mean(np.stack(devs), axis=0)
    mats = [M + D - dev_mean for D in devs]

    c = rng.normals(d)
    shifts = [spread * rng.normals(d) for _ in range(n)]
    shift_mean = np.mean(np.stack(shifts), axis=0)
    vecs = [c + s - shift_mean for s in shifts]

    star = -np.linalg.solve(M, c)

    def eval_full(u: Array) -> Array:
        return M @ u + c

    def eval_component(i: int, u: Array) -> Array:
        return mats[i] @ u + vecs[i]

    return ProblemInstance(
        n=n,
        d=d,
        eval_full=eval_full,
        eval_component=eval_component,
        resolvent=lambda eta, u: u,
        L=_expected_lipschitz_affine(mats),
        L_F=float(np.linalg.norm(M, 2)),
        known_solution=star,
        affine=(M, c),
        metric=lambda u: float(np.linalg.norm(M @ u + c)),
        name="synthetic-affine",
    )


# ---------------------------------------------------------------------------
# Plain-text matrix exchange
# ---------------------------------------------------------------------------


def save_matrix_csv(A: Array, path: str) -> None:
    """Row-major CSV with 17-significant-digit (round-trip exact) entries."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("expected a matrix")
    np.savetxt(path, A, delimiter=",", fmt="%.17g")


def load_matrix_csv(path: str) -> Array:
    A = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    return A
