"""A-criterion objective for relaxed experimental design, with derivatives.

The information matrix is M(w, q) = alpha^-1 I + J(q)' W(w) J(q) (the prior
term only when configured), and the design quality is Tr(M^-1): smaller
means better-determined parameters. A problem may be flagged as
preconditioned, in which case every value is passed through the
solution-preserving transform z -> -z^-2, which maps (0, inf) onto
(-inf, 0) and keeps the minimizer while bounding the absolute condition
number of the optimality system.

First derivatives with respect to the weights are analytic, from
d Tr(M^-1) = -Tr(M^-1 dM M^-1); derivatives with respect to controls use
caller-supplied dJ/dq_k. The exact second-derivative diagonal over weights
feeds the SQP initial Hessian scaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from .errors import MissingJacobianDerivative, NotPositiveDefinite, SingularInformationMatrix
from .linalg import cholesky

__all__ = [
    "DesignProblem",
    "apply_preconditioner",
    "check_weights",
    "information_matrix",
    "objective",
    "gradient_w",
    "gradient_q",
    "hessian_w_diagonal",
]


def apply_preconditioner(z: float) -> float:
    """Left preconditioner value: -z^-2 on (0, inf)."""
    return -(z ** -2.0)


def _precond_d1(z: float) -> float:
    return 2.0 * z ** -3.0


def _precond_d2(z: float) -> float:
    return -6.0 * z ** -4.0


@dataclass
class DesignProblem:
    """Relaxed A-optimal design instance.

    Exactly one of ``jacobian`` (fixed candidate matrix, rows are candidate
    measurements) or ``jacobian_fn`` (controls -> matrix) must be given.
    ``jacobian_derivatives_fn`` additionally returns the per-control
    derivative matrices and is required for control gradients.
    """

    jacobian: Optional[np.ndarray] = None
    jacobian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jacobian_derivatives_fn: Optional[
        Callable[[np.ndarray], Tuple[np.ndarray, Sequence[np.ndarray]]]
    ] = None
    prior_alpha: Optional[float] = None
    m_max: int = 1
    control_bounds: Sequence[Tuple[float, float]] = field(default_factory=tuple)
    preconditioned: bool = False

    def __post_init__(self):
        if (self.jacobian is None) == (self.jacobian_fn is None):
            raise ValueError("give exactly one of jacobian or jacobian_fn")
        if self.jacobian is not None:
            self.jacobian = np.asarray(self.jacobian, dtype=float)
            if not np.isfinite(self.jacobian).all():
                raise ValueError("candidate matrix contains NaN or Inf")
            if not self.m_max < self.jacobian.shape[0]:
                raise ValueError("measurement budget must be below the candidate count")
        if self.prior_alpha is not None and not self.prior_alpha > 0.0:
            raise ValueError("prior_alpha must be positive")
        for low, high in self.control_bounds:
            if not low < high:
                raise ValueError(f"control bounds [{low}, {high}] are empty")

    @property
    def n_controls(self) -> int:
        return len(self.control_bounds)

    def control_lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.control_bounds])

    def control_upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.control_bounds])

    def candidate_matrix(self, q=None) -> np.ndarray:
        if self.jacobian is not None:
            return self.jacobian
        return np.asarray(self.jacobian_fn(np.asarray(q, dtype=float)), dtype=float)

    def candidate_matrix_and_derivatives(self, q=None):
        if self.jacobian_derivatives_fn is None:
            raise MissingJacobianDerivative(
                "design problem has no control-derivative provider"
            )
        J, dJ = self.jacobian_derivatives_fn(np.asarray(q, dtype=float))
        return np.asarray(J, dtype=float), [np.asarray(D, dtype=float) for D in dJ]


def check_weights(w, m_max: float) -> np.ndarray:
    """Validate a feasible weight vector: entries in [0,1], sum == budget."""
    w = np.asarray(w, dtype=float)
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise ValueError("weights must lie in [0, 1]")
    if abs(w.sum() - m_max) > 1e-10 * max(1.0, m_max):
        raise ValueError(f"weights sum to {w.sum()}, expected {m_max}")
    return w


def information_matrix(problem: DesignProblem, w, q=None) -> np.ndarray:
    """M = [alpha^-1 I +] J' W(w) J, exactly symmetric by construction."""
    J = problem.candidate_matrix(q)
    w = np.asarray(w, dtype=float)
    if w.size != J.shape[0]:
        raise ValueError(f"{w.size} weights for {J.shape[0]} candidate rows")
    if np.any(w < 0.0):
        raise ValueError("weights must be nonnegative")
    M = J.T @ (w[:, None] * J)
    M = 0.5 * (M + M.T)
    if problem.prior_alpha is not None:
        M[np.diag_indices_from(M)] += 1.0 / problem.prior_alpha
    return M


def _factor(problem: DesignProblem, w, q):
    M = information_matrix(problem, w, q)
    try:
        return cholesky(M)
    except NotPositiveDefinite as exc:
        raise SingularInformationMatrix(str(exc)) from exc


def _trace_inverse(factor) -> float:
    cols = solve_triangular(factor.lower, np.eye(factor.dim), lower=True)
    return float(np.sum(cols * cols))


def objective(problem: DesignProblem, w, q=None) -> float:
    """Tr(M^-1), or its preconditioned image -Tr(M^-1)^-2."""
    value = _trace_inverse(_factor(problem, w, q))
    if problem.preconditioned:
        return apply_preconditioner(value)
    return value


def gradient_w(problem: DesignProblem, w, q=None) -> np.ndarray:
    """Gradient over weights: d/dw_i Tr(M^-1) = -|M^-1 j_i|^2 (row j_i)."""
    J = problem.candidate_matrix(q)
    factor = _factor(problem, w, q)
    X = factor.solve(J.T)
    grad = -np.sum(X * X, axis=0)
    if problem.preconditioned:
        grad = _precond_d1(_trace_inverse(factor)) * grad
    return grad


def gradient_q(problem: DesignProblem, w, q) -> np.ndarray:
    """Gradient over controls via dM/dq_k = dJ_k' W J + J' W dJ_k."""
    J, dJ = problem.candidate_matrix_and_derivatives(q)
    w = np.asarray(w, dtype=float)
    factor = _factor(problem, w, q)
    Minv = factor.solve(np.eye(factor.dim))
    Minv2 = Minv @ Minv
    WJ = w[:, None] * J
    grad = np.empty(len(dJ))
    for k, Dk in enumerate(dJ):
        B = Dk.T @ WJ
        grad[k] = -np.sum(Minv2 * (B + B.T))
    if problem.preconditioned:
        grad = _precond_d1(float(np.trace(Minv))) * grad
    return grad


def hessian_w_diagonal(problem: DesignProblem, w, q=None) -> np.ndarray:
    """Exact diagonal of the weight Hessian.

    Unpreconditioned entries 2 (j_i' M^-1 j_i)(j_i' M^-2 j_i) are always
    nonnegative; the preconditioned diagonal follows from the chain rule and
    may change sign.
    """
    J = problem.candidate_matrix(q)
    factor = _factor(problem, w, q)
    X = factor.solve(J.T)
    first = np.einsum("ij,ji->i", J, X)  # j_i' M^-1 j_i
    second = np.sum(X * X, axis=0)  # j_i' M^-2 j_i
    diag = 2.0 * first * second
    if problem.preconditioned:
        f = _trace_inverse(factor)
        grad = -second
        diag = _precond_d2(f) * grad * grad + _precond_d1(f) * diag
    return diag
