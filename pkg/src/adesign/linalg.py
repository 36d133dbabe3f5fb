"""Dense linear algebra and numerical utilities.

Cholesky factorization with an explicit breakdown tolerance, trace of the
inverse of an SPD matrix, seeded generation of random design matrices with a
prescribed condition number, and finite-difference derivative checks.

All matrices are plain float64 numpy arrays. Reproducibility is provided by
the Philox counter-based bit generator: streams built by :func:`rng_stream`
are bit-identical across runs and platforms for equal (seed, substream).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateInput, NonFiniteValue, NotPositiveDefinite

EPS = np.finfo(float).eps

__all__ = [
    "CholeskyFactor",
    "cholesky",
    "trace_of_inverse",
    "orthonormal_columns",
    "random_design_matrix",
    "finite_difference_gradient",
    "finite_difference_hessian_diagonal",
    "rng_stream",
]


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with L L' equal to the input matrix."""

    lower: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (L L') x = rhs."""
        y = solve_triangular(self.lower, rhs, lower=True)
        return solve_triangular(self.lower.T, y, lower=False)


def _as_square(matrix) -> np.ndarray:
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return M


def cholesky(matrix) -> CholeskyFactor:
    """Factor a symmetric positive-definite matrix as L L'.

    Raises
    ------
    NotPositiveDefinite
        If a pivot falls below ``dim * eps * max(diagonal)``, signalling a
        singular or indefinite matrix.
    ValueError
        If the matrix is not square or not symmetric within 1e-12 relative
        asymmetry.
    """
    M = _as_square(matrix)
    n = M.shape[0]
    scale = np.abs(M).max() if n else 0.0
    if np.abs(M - M.T).max(initial=0.0) > 1e-12 * max(scale, 1e-300):
        raise ValueError("matrix is not symmetric within 1e-12 relative asymmetry")
    if not np.isfinite(M).all():
        raise NonFiniteValue("matrix contains NaN or Inf")
    tol = n * EPS * M.diagonal().max(initial=0.0)
    L = np.zeros_like(M)
    for j in range(n):
        col = M[j:, j] - L[j:, :j] @ L[j, :j]
        pivot = col[0]
        if pivot <= tol:
            raise NotPositiveDefinite(f"pivot {pivot:.3e} <= tolerance {tol:.3e} at column {j}")
        ljj = np.sqrt(pivot)
        L[j, j] = ljj
        L[j + 1:, j] = col[1:] / ljj
    return CholeskyFactor(L)


def trace_of_inverse(matrix) -> float:
    """Tr(M^-1) for SPD M, via triangular solves against the identity.

    Equal to the squared Frobenius norm of L^-1 where M = L L'.
    """
    factor = cholesky(matrix)
    cols = solve_triangular(factor.lower, np.eye(factor.dim), lower=True)
    return float(np.sum(cols * cols))


def rng_stream(seed: int, substream: int = 0) -> np.random.Generator:
    """Deterministic random stream for (seed, substream).

    Distinct substreams of one seed are statistically independent; parallel
    trials split by trial index.
    """
    mask = (1 << 64) - 1
    return np.random.Generator(np.random.Philox(key=[seed & mask, substream & mask]))


def orthonormal_columns(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Matrix with orthonormal columns from QR of a uniform[-1,1] draw."""
    A = rng.uniform(-1.0, 1.0, size=(rows, cols))
    Q, R = np.linalg.qr(A, mode="reduced")
    d = R.diagonal()
    if np.abs(d).min(initial=np.inf) <= rows * EPS * max(np.abs(d).max(initial=0.0), 1e-300):
        raise DegenerateInput("rank-deficient QR draw")
    return Q * np.where(d < 0.0, -1.0, 1.0)


def random_design_matrix(
    m: int,
    n: int,
    cond: float,
    row_normalize: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Random m x n design matrix with prescribed 2-norm condition number.

    Composes orthonormal factors U (m x n) and V (n x n) with geometrically
    decaying singular values sigma_k = cond^(1/2 - (k-1)/(n-1)), so that
    sigma_1/sigma_n = cond exactly and the spectrum is centered on 1 (the
    geometric mean of the singular values is 1). With ``row_normalize``,
    every row is then scaled to unit Euclidean norm (which perturbs the
    final condition number).
    """
    if not (m >= n >= 1):
        raise ValueError(f"need m >= n >= 1, got m={m}, n={n}")
    if cond < 1.0:
        raise ValueError(f"need cond >= 1, got {cond}")
    if rng is None:
        rng = rng_stream(0)
    if n == 1:
        sigma = np.ones(1)
    else:
        sigma = cond ** (0.5 - np.arange(n) / (n - 1))
    last_error = None
    for _ in range(4):  # initial try plus up to 3 retries with fresh draws
        try:
            U = orthonormal_columns(m, n, rng)
            V = orthonormal_columns(n, n, rng)
            J = (U * sigma) @ V.T
            if row_normalize:
                norms = np.linalg.norm(J, axis=1)
                if norms.min() <= m * EPS:
                    raise DegenerateInput("zero row before normalization")
                J = J / norms[:, None]
            return J
        except DegenerateInput as exc:
            last_error = exc
    raise DegenerateInput("QR breakdown persisted after 3 retries") from last_error


def finite_difference_gradient(f: Callable, x, h: float) -> np.ndarray:
    """Central-difference gradient (f(x+h e_i) - f(x-h e_i)) / (2h)."""
    if h <= 0.0:
        raise ValueError(f"need h > 0, got {h}")
    x = np.asarray(x, dtype=float)
    grad = np.empty(x.size)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteValue(f"non-finite evaluation perturbing coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def finite_difference_hessian_diagonal(f: Callable, x, h) -> np.ndarray:
    """Second central differences (f(x+h e_i) - 2 f(x) + f(x-h e_i)) / h^2.

    ``h`` may be a scalar or a per-coordinate array.
    """
    x = np.asarray(x, dtype=float)
    steps = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    if np.any(steps <= 0.0):
        raise ValueError("need h > 0")
    f0 = float(f(x))
    diag = np.empty(x.size)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += steps[i]
        xm[i] -= steps[i]
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm) and np.isfinite(f0)):
            raise NonFiniteValue(f"non-finite evaluation perturbing coordinate {i}")
        diag[i] = (fp - 2.0 * f0 + fm) / steps[i] ** 2
    return diag
