"""Quasi-Newton SQP solver with damped BFGS updates and a merit line search.

Each iteration minimizes a quadratic model of the objective subject to the
linearized (here: linear) constraints via the active-set QP solver, then
backtracks on an augmented Lagrangian merit function

    Phi(x; lambda, rho) = f(x) + lambda * c(x) + (rho/2) c(x)^2

where c is the equality residual. Bounds are enforced by the QP subproblem
and clipping, so trial points stay feasible and c stays at roundoff level.
Convergence is declared from the Euclidean length of the QP search
direction, the quantity recorded per iteration in the trace.

Double precision cannot resolve merit decreases below the rounding level of
Phi on badly conditioned (flat) instances, so the Armijo test carries an
explicit floating-noise allowance of ``merit_noise_factor * eps * (1+|Phi|)``;
without it the search would stall at the noise floor instead of letting the
quadratic model finish the job.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateStep, EvaluationError, LineSearchFailure, NotPositiveDefinite
from .linalg import cholesky
from .qp import ITERATION_LIMIT, QpProblem, project_feasible, solve_qp

EPS = np.finfo(float).eps

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
QP_ITERATION_LIMIT = "qp_iteration_limit"
EVALUATION_FAILURE = "evaluation_failure"

__all__ = [
    "CONVERGED",
    "MAX_ITERATIONS",
    "QP_ITERATION_LIMIT",
    "EVALUATION_FAILURE",
    "NlpSpec",
    "SqpOptions",
    "IterationRecord",
    "SqpReport",
    "damped_bfgs_update",
    "initial_hessian",
    "merit_and_linesearch",
    "solve",
]


@dataclass
class NlpSpec:
    """Nonlinear program over x: callbacks plus one linear equality and bounds."""

    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    eq: Optional[Tuple[np.ndarray, float]] = None
    initial_hessian_diagonal: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape:
            raise ValueError("bound shapes differ")
        if self.eq is not None:
            a = np.asarray(self.eq[0], dtype=float)
            if a.shape != self.lower.shape:
                raise ValueError("equality row length does not match bounds")
            self.eq = (a, float(self.eq[1]))

    @property
    def n(self) -> int:
        return self.lower.size


@dataclass
class SqpOptions:
    tol_d: float = 1e-8
    max_iterations: int = 500
    qp_max_iterations: Optional[int] = None
    armijo: float = 1e-4
    min_step: float = 1e-12
    initial_penalty: float = 1.0
    hessian_floor: float = 1e-8
    merit_noise_factor: float = 10.0
    hessian_condition_limit: float = 1e15


@dataclass
class IterationRecord:
    direction_norm: float
    merit: float
    step_length: float
    objective: float


@dataclass
class SqpReport:
    x: np.ndarray
    iterations: int
    status: str
    trace: List[IterationRecord] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.trace[-1].objective if self.trace else np.nan

    @property
    def final_direction_norm(self) -> float:
        return self.trace[-1].direction_norm if self.trace else np.nan


def damped_bfgs_update(B, s, y) -> np.ndarray:
    """Powell-damped BFGS update of an SPD Hessian approximation.

    The damping interpolates y toward Bs whenever s'y < 0.2 s'Bs, which keeps
    s'r >= 0.2 s'Bs > 0 and therefore the update positive definite.

    Raises
    ------
    DegenerateStep
        If s'Bs <= 0, signalling a corrupted approximation: callers reset B.
    """
    B = np.asarray(B, dtype=float)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 0.0:
        raise DegenerateStep(f"s'Bs = {sBs:.3e} is not positive")
    sy = float(s @ y)
    if sy >= 0.2 * sBs:
        theta = 1.0
    else:
        theta = 0.8 * sBs / (sBs - sy)
    r = theta * y + (1.0 - theta) * Bs
    updated = B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / float(s @ r)
    return 0.5 * (updated + updated.T)


def initial_hessian(nlp: NlpSpec, x0, floor: float = 1e-8) -> np.ndarray:
    """Diagonal start for BFGS: |exact Hessian diagonal| floored away from 0.

    Keeps the true diagonal in the convex unpreconditioned case and restores
    positive definiteness in the preconditioned one, where diagonal entries
    may be negative. The floor is relative to the largest entry: the
    preconditioned curvature scales like the cube of the inverse trace and
    can sit many orders below any absolute constant without being
    degenerate.
    """
    if nlp.initial_hessian_diagonal is None:
        diag = np.ones(nlp.n)
    else:
        diag = np.asarray(nlp.initial_hessian_diagonal(np.asarray(x0, dtype=float)), dtype=float)
    magnitude = np.abs(diag)
    scale = magnitude.max(initial=0.0)
    if scale <= 0.0:
        return np.eye(nlp.n)
    return np.diag(np.maximum(magnitude, floor * scale))


def _merit(f: float, c: float, lam: float, rho: float) -> float:
    return f + lam * c + 0.5 * rho * c * c


def _condition_bound(B) -> float:
    """Cheap lower bound on cond(B): max diag(B) * max diag(B^-1)."""
    try:
        L = cholesky(B).lower
    except NotPositiveDefinite:
        return np.inf
    cols = solve_triangular(L, np.eye(L.shape[0]), lower=True)
    return float(B.diagonal().max() * (cols * cols).sum(axis=0).max())


def merit_and_linesearch(nlp: NlpSpec, x, f, g, d, lam, rho, options: SqpOptions):
    """Backtracking Armijo search on the augmented Lagrangian merit.

    Trial evaluations raising :class:`EvaluationError` (singular information
    matrix, integrator blow-up) reject the step length and continue halving.
    Returns ``(alpha, x_new, f_new, rho)``; the penalty is bumped to
    ``max(rho, 2|lam|+1)`` when the directional derivative test fails.

    Raises
    ------
    LineSearchFailure
        When no step down to ``min_step`` achieves the (noise-allowing)
        Armijo decrease.
    """
    a_vec, b_rhs = nlp.eq if nlp.eq is not None else (None, 0.0)

    def residual(point):
        return float(a_vec @ point - b_rhs) if a_vec is not None else 0.0

    c0 = residual(x)

    def directional(penalty):
        return float(g @ d) + (lam + penalty * c0) * (
            float(a_vec @ d) if a_vec is not None else 0.0
        )

    phi0 = _merit(f, c0, lam, rho)
    noise = options.merit_noise_factor * EPS * (1.0 + abs(phi0))
    slope = directional(rho)
    if slope >= 0.0:
        rho = max(rho, 2.0 * abs(lam) + 1.0)
        phi0 = _merit(f, c0, lam, rho)
        slope = directional(rho)
        if slope >= 0.0:
            if slope > noise:
                raise LineSearchFailure("search direction is not a descent direction")
            # positive by cancellation noise only: proceed with a flat model
            # and let the noise allowance decide acceptance
            slope = 0.0
    alpha = 1.0
    while alpha >= options.min_step:
        xt = np.clip(x + alpha * d, nlp.lower, nlp.upper)
        try:
            ft = float(nlp.objective(xt))
        except EvaluationError:
            alpha *= 0.5
            continue
        phit = _merit(ft, residual(xt), lam, rho)
        if phit <= phi0 + options.armijo * alpha * slope + noise:
            return alpha, xt, ft, rho
        alpha *= 0.5
    raise LineSearchFailure(f"no acceptable step above {options.min_step:.1e}")


def solve(nlp: NlpSpec, x0, options: SqpOptions | None = None) -> SqpReport:
    """Run the SQP iteration from x0 (projected onto the feasible box first).

    Terminates with status ``converged`` exactly when the Euclidean length of
    the QP direction falls to ``tol_d``; a QP subproblem hitting its
    iteration limit aborts the run with status ``qp_iteration_limit`` and is
    counted as a failure by the experiment harness.
    """
    options = options or SqpOptions()
    x = project_feasible(nlp.eq, nlp.lower, nlp.upper, np.asarray(x0, dtype=float))
    trace: List[IterationRecord] = []
    try:
        f = float(nlp.objective(x))
        g = np.asarray(nlp.gradient(x), dtype=float)
        B = initial_hessian(nlp, x, options.hessian_floor)
    except EvaluationError:
        return SqpReport(x=x, iterations=0, status=EVALUATION_FAILURE, trace=trace)
    reset_diagonal = B.diagonal().copy()
    a_vec, b_rhs = nlp.eq if nlp.eq is not None else (None, 0.0)
    lam = 0.0
    rho = options.initial_penalty
    no_progress = 0

    for k in range(1, options.max_iterations + 1):
        c = float(a_vec @ x - b_rhs) if a_vec is not None else 0.0
        qp = QpProblem(
            H=B,
            g=g,
            eq=(a_vec, -c) if a_vec is not None else None,
            lower=nlp.lower - x,
            upper=nlp.upper - x,
            max_iterations=options.qp_max_iterations,
        )
        sol = solve_qp(qp, np.zeros(nlp.n))
        d = sol.x
        dn = float(np.linalg.norm(d))
        if sol.status == ITERATION_LIMIT:
            trace.append(IterationRecord(dn, _merit(f, c, lam, rho), 0.0, f))
            return SqpReport(x=x, iterations=k, status=QP_ITERATION_LIMIT, trace=trace)
        if dn <= options.tol_d:
            trace.append(IterationRecord(dn, _merit(f, c, lam, rho), 0.0, f))
            return SqpReport(x=x, iterations=k, status=CONVERGED, trace=trace)
        lam = sol.eq_multiplier if a_vec is not None else 0.0

        try:
            alpha, x_new, f_new, rho = merit_and_linesearch(nlp, x, f, g, d, lam, rho, options)
        except LineSearchFailure:
            trace.append(IterationRecord(dn, _merit(f, c, lam, rho), 0.0, f))
            status = EVALUATION_FAILURE if k == 1 else MAX_ITERATIONS
            return SqpReport(x=x, iterations=k, status=status, trace=trace)

        if a_vec is not None and abs(a_vec @ x_new - b_rhs) > 1e-12 * max(1.0, abs(b_rhs)):
            x_new = project_feasible(nlp.eq, nlp.lower, nlp.upper, x_new)
        try:
            g_new = np.asarray(nlp.gradient(x_new), dtype=float)
        except EvaluationError:
            trace.append(IterationRecord(dn, _merit(f_new, 0.0, lam, rho), alpha, f_new))
            return SqpReport(x=x_new, iterations=k, status=EVALUATION_FAILURE, trace=trace)

        s = x_new - x
        stall = np.abs(s).max(initial=0.0) <= 10.0 * EPS * (1.0 + np.abs(x).max(initial=0.0))
        if stall:
            # the accepted step does not move the iterate in doubles: the
            # merit comparison has dropped below the evaluation noise
            no_progress += 1
            if no_progress >= 3:
                c_new = float(a_vec @ x_new - b_rhs) if a_vec is not None else 0.0
                trace.append(IterationRecord(dn, _merit(f_new, c_new, lam, rho), alpha, f_new))
                return SqpReport(x=x_new, iterations=k, status=MAX_ITERATIONS, trace=trace)
        else:
            no_progress = 0
            # Lagrangian-gradient difference: the linear equality term
            # cancels, leaving the plain gradient difference
            y = g_new - g
            try:
                B = damped_bfgs_update(B, s, y)
            except DegenerateStep:
                B = np.diag(reset_diagonal)
            if _condition_bound(B) > options.hessian_condition_limit:
                # the accumulated approximation is no longer reliably
                # factorable in doubles: restart from the exact diagonal
                try:
                    B = initial_hessian(nlp, x_new, options.hessian_floor)
                except EvaluationError:
                    B = np.diag(reset_diagonal)
        x, f, g = x_new, f_new, g_new
        c_new = float(a_vec @ x - b_rhs) if a_vec is not None else 0.0
        trace.append(IterationRecord(dn, _merit(f, c_new, lam, rho), alpha, f))

    return SqpReport(x=x, iterations=options.max_iterations, status=MAX_ITERATIONS, trace=trace)
