"""Primal active-set solver for strictly convex quadratic programs.

Handles problems of the form

    minimize  0.5 x'Hx + g'x   subject to  a'x = b,  lower <= x <= upper

with H symmetric positive definite, one optional dense equality row and
simple bounds (entries may be infinite). The working set holds bound
constraints treated as equalities; each iteration minimizes over the free
variables with the equality handled by a Schur-complement solve on the free
block, then either takes a (possibly blocked) step or checks multiplier
signs. Exhausting the iteration limit is reported as the ``ITERATION_LIMIT``
status rather than an error: the surrounding SQP solver counts it as a
failed run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import EmptyFeasibleSet, InfeasibleStart, NotPositiveDefinite

EPS = np.finfo(float).eps

OPTIMAL = "optimal"
ITERATION_LIMIT = "iteration_limit"

# working-set states per variable
_FREE, _LOW, _UP, _FIXED = 0, 1, 2, 3

__all__ = [
    "OPTIMAL",
    "ITERATION_LIMIT",
    "QpProblem",
    "QpSolution",
    "solve_qp",
    "project_feasible",
    "default_iteration_limit",
]


def default_iteration_limit(n_variables: int, n_finite_bounds: int) -> int:
    """Default active-set iteration budget: 10 n (1 + #finite bounds)."""
    return 10 * n_variables * (1 + n_finite_bounds)


@dataclass
class QpProblem:
    """Strictly convex QP with one optional equality and simple bounds."""

    H: np.ndarray
    g: np.ndarray
    eq: Optional[Tuple[np.ndarray, float]] = None
    lower: np.ndarray = None
    upper: np.ndarray = None
    max_iterations: int | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        n = self.g.size
        if self.H.shape != (n, n):
            raise ValueError(f"H shape {self.H.shape} does not match g size {n}")
        scale = np.abs(self.H).max() if n else 0.0
        if n and np.abs(self.H - self.H.T).max() > 1e-12 * max(scale, 1e-300):
            raise ValueError("H is not symmetric within 1e-12 relative asymmetry")
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if self.eq is not None:
            a = np.asarray(self.eq[0], dtype=float)
            if a.size != n:
                raise ValueError("equality row length does not match variable count")
            self.eq = (a, float(self.eq[1]))
        if self.max_iterations is None:
            finite = int(np.isfinite(self.lower).sum() + np.isfinite(self.upper).sum())
            self.max_iterations = default_iteration_limit(n, finite)

    @property
    def n(self) -> int:
        return self.g.size


@dataclass
class QpSolution:
    x: np.ndarray
    eq_multiplier: float
    bound_multipliers: np.ndarray
    active_set: np.ndarray
    iterations: int
    status: str
    objective: float = field(default=np.nan)


def _subproblem_step(H, g, a, r_b, x, free, fixed):
    """Minimizer over the free block with the working set held at bounds.

    Returns (x_hat_free, lam) where lam is the equality multiplier of the
    subproblem, or None when the equality does not touch the free block.
    """
    Hff = H[np.ix_(free, free)]
    rhs = -g[free]
    if fixed.size:
        rhs = rhs - H[np.ix_(free, fixed)] @ x[fixed]
    try:
        factor = cho_factor(Hff, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("free block of H is not positive definite") from exc
    u1 = cho_solve(factor, rhs, check_finite=False)
    if a is None:
        return u1, None
    af = a[free]
    if not np.any(af):
        return u1, None
    u2 = cho_solve(factor, af, check_finite=False)
    denom = af @ u2
    lam = (r_b - af @ u1) / denom
    x_hat = u1 + lam * u2
    # refine: an ill-conditioned free block loses equality accuracy in the
    # Schur solve, which would leak budget violations into the SQP step
    for _ in range(2):
        correction = (r_b - af @ x_hat) / denom
        if correction == 0.0:
            break
        lam += correction
        x_hat = x_hat + correction * u2
    return x_hat, lam


def _multiplier_interval(q, a, state, lower_like, upper_like):
    """Equality multiplier from sign requirements when the free block is
    decoupled from the equality (vertex or control-only free set)."""
    lam_min, lam_max = -np.inf, np.inf
    for i in np.flatnonzero((state == _LOW) | (state == _UP)):
        if a[i] == 0.0:
            continue
        ratio = q[i] / a[i]
        wants_low = (state[i] == _LOW) == (a[i] > 0.0)
        if wants_low:
            lam_max = min(lam_max, ratio)
        else:
            lam_min = max(lam_min, ratio)
    if lam_min > lam_max:
        return 0.5 * (lam_min + lam_max)  # infeasible signs; worst gets dropped
    if lam_min <= 0.0 <= lam_max:
        return 0.0
    return lam_min if lam_min > 0.0 else lam_max


def solve_qp(problem: QpProblem, x0) -> QpSolution:
    """Minimize the QP from a feasible start.

    The start must satisfy the bounds exactly and the equality within 1e-10;
    callers project with :func:`project_feasible` first. On ``OPTIMAL`` the
    returned multipliers satisfy the KKT conditions (bound multipliers >= 0
    at lower bounds, <= 0 at upper bounds).
    """
    H, g = problem.H, problem.g
    lower, upper = problem.lower, problem.upper
    n = problem.n
    x = np.asarray(x0, dtype=float).copy()
    if x.size != n:
        raise ValueError("x0 size mismatch")
    if np.any(x < lower) or np.any(x > upper):
        raise InfeasibleStart("x0 violates the bounds")
    a_vec, b_rhs = (None, 0.0)
    if problem.eq is not None:
        a_vec, b_rhs = problem.eq
        if not np.any(a_vec):
            if abs(b_rhs) > 1e-10:
                raise InfeasibleStart("zero equality row with nonzero right-hand side")
            a_vec = None
        elif abs(a_vec @ x - b_rhs) > 1e-10 * max(1.0, abs(b_rhs)):
            raise InfeasibleStart("x0 violates the equality constraint")

    state = np.full(n, _FREE, dtype=np.int64)
    state[x <= lower] = _LOW
    state[x >= upper] = _UP
    state[lower == upper] = _FIXED
    # pin working-set coordinates to their bounds bitwise
    x[state == _LOW] = lower[state == _LOW]
    x[(state == _UP) | (state == _FIXED)] = upper[(state == _UP) | (state == _FIXED)]

    degenerate_run = 0
    iterations = 0
    while iterations < problem.max_iterations:
        iterations += 1
        free = np.flatnonzero(state == _FREE)
        fixed = np.flatnonzero(state != _FREE)
        lam_sub = None
        if free.size:
            r_b = b_rhs - (a_vec[fixed] @ x[fixed] if (a_vec is not None and fixed.size) else 0.0)
            x_hat, lam_sub = _subproblem_step(H, g, a_vec, r_b, x, free, fixed)
            d = x_hat - x[free]
            dn = np.abs(d).max(initial=0.0)
        else:
            x_hat = d = np.zeros(0)
            dn = 0.0

        ztol = 1e-13 * (1.0 + np.abs(x).max(initial=0.0) + np.abs(x_hat).max(initial=0.0))
        if dn <= ztol:
            q = H @ x + g
            if a_vec is None:
                lam = 0.0
            elif free.size and np.any(a_vec[free]):
                af = a_vec[free]
                lam = float(af @ q[free]) / float(af @ af)
            else:
                lam = _multiplier_interval(q, a_vec, state, lower, upper)
            mu = q - lam * a_vec if a_vec is not None else q.copy()
            mu[state == _FREE] = 0.0
            # sign test threshold: relative to the gradient scale, but never
            # below eps^0.8 * (1 + scale) -- the documented default optimality
            # tolerance of the production solver this module replaces. Below
            # that level a double-precision active-set method cannot certify
            # multiplier signs, and nearly-flat problems terminate here.
            q_scale = np.abs(q).max(initial=0.0)
            mtol = max(1e-10 * q_scale, EPS ** 0.8 * (1.0 + q_scale))
            viol = np.zeros(n)
            low_mask = state == _LOW
            up_mask = state == _UP
            viol[low_mask] = np.maximum(-mu[low_mask] - mtol, 0.0)
            viol[up_mask] = np.maximum(mu[up_mask] - mtol, 0.0)
            worst = int(np.argmax(viol))
            if viol[worst] <= 0.0:
                return QpSolution(
                    x=x,
                    eq_multiplier=lam,
                    bound_multipliers=mu,
                    active_set=np.sort(fixed),
                    iterations=iterations,
                    status=OPTIMAL,
                    objective=float(0.5 * x @ H @ x + g @ x),
                )
            # dropping a wrong-sign constraint is productive work, so it does
            # not touch the stall counter; only zero-length blocked steps do
            # (a genuine drop/re-add cycle must pass through those)
            state[worst] = _FREE
            continue

        # ratio test: largest step along d staying inside the bounds
        alpha = 1.0
        blocker = -1
        blocker_side = _FREE
        for idx in range(free.size):
            i = free[idx]
            di = d[idx]
            if di > 0.0 and np.isfinite(upper[i]):
                t = (upper[i] - x[i]) / di
                side = _UP
            elif di < 0.0 and np.isfinite(lower[i]):
                t = (lower[i] - x[i]) / di
                side = _LOW
            else:
                continue
            t = max(t, 0.0)
            if t < alpha:  # strict: ties keep the smallest index
                alpha = t
                blocker = i
                blocker_side = side
        if blocker < 0:
            x[free] = x_hat  # full step lands exactly on the subproblem optimum
            degenerate_run = 0
        else:
            if alpha == 0.0:
                degenerate_run += 1
                if degenerate_run > n:
                    break
            else:
                degenerate_run = 0
                x[free] += alpha * d
            x[blocker] = upper[blocker] if blocker_side == _UP else lower[blocker]
            state[blocker] = blocker_side
            np.clip(x, lower, upper, out=x)

    fixed = np.flatnonzero(state != _FREE)
    return QpSolution(
        x=x,
        eq_multiplier=0.0,
        bound_multipliers=np.zeros(n),
        active_set=np.sort(fixed),
        iterations=iterations,
        status=ITERATION_LIMIT,
        objective=float(0.5 * x @ H @ x + g @ x),
    )


def project_feasible(eq, lower, upper, x) -> np.ndarray:
    """Project a point onto the bounds and the equality constraint.

    Clips to the bounds, then repeatedly spreads the equality residual over
    the coordinates that can still move (scaled by the equality row), which
    terminates because every pass either satisfies the equality or saturates
    at least one more bound.

    Raises
    ------
    EmptyFeasibleSet
        If the equality level is unreachable inside the box, e.g. a weight
        budget exceeding the number of candidates.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise ValueError("lower bound exceeds upper bound")
    y = np.clip(np.asarray(x, dtype=float), lower, upper)
    if eq is None:
        return y
    a = np.asarray(eq[0], dtype=float)
    b = float(eq[1])
    hi = np.sum(np.where(a > 0.0, a * upper, a * lower))
    lo = np.sum(np.where(a > 0.0, a * lower, a * upper))
    tol = 1e-12 * max(1.0, abs(b))
    if b > hi + tol or b < lo - tol:
        raise EmptyFeasibleSet(f"equality level {b} outside attainable range [{lo}, {hi}]")
    for _ in range(y.size + 2):
        r = b - a @ y
        if abs(r) <= tol:
            return y
        if r > 0.0:
            movable = ((a > 0.0) & (y < upper)) | ((a < 0.0) & (y > lower))
        else:
            movable = ((a > 0.0) & (y > lower)) | ((a < 0.0) & (y < upper))
        if not movable.any():
            break
        am = a[movable]
        y[movable] += r * am / (am @ am)
        np.clip(y, lower, upper, out=y)
    if abs(b - a @ y) <= tol:
        return y
    raise EmptyFeasibleSet("could not redistribute the equality residual")
