"""Two-measurement model problem with closed-form conditioning analysis.

Choosing between two orthonormal candidate rows under a prior of quality
``alpha`` (smaller alpha = better prior) reduces, after eliminating the
weight-sum constraint, to a scalar objective

    f(w) = 2 a - w a^2 / (1 + w a) - (1-w) a^2 / (1 + (1-w) a)

whose minimizer is w* = 1/2. The absolute condition number of the
stationarity equation f'(w) = 0 is 1/(|f''(w*)| |w*|), which evaluates to
(1 + a/2)^3 / (2 a^3): it blows up like a^-3 as the prior improves. The
preconditioned counterpart -f(w)^-2 shares the minimizer and has absolute
condition number exactly 2 for every alpha.

The empirical estimator here perturbs the stationarity equation by +/-eps,
re-solves it by safeguarded Newton root finding, and differences the two
roots; it validates both condition-number formulas numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import RootNotBracketed

__all__ = [
    "ModelProblem",
    "reduced_objective",
    "reduced_derivatives",
    "analytic_condition_number",
    "empirical_condition_number",
]

MINIMIZER = 0.5


@dataclass(frozen=True)
class ModelProblem:
    alpha: float
    preconditioned: bool = False

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive")


def _base_value(alpha: float, w: float) -> float:
    return (
        2.0 * alpha
        - w * alpha ** 2 / (1.0 + w * alpha)
        - (1.0 - w) * alpha ** 2 / (1.0 + (1.0 - w) * alpha)
    )


def _base_derivatives(alpha: float, w: float):
    up = 1.0 + alpha * w
    down = 1.0 + alpha * (1.0 - w)
    d1 = -(alpha ** 2) / up ** 2 + alpha ** 2 / down ** 2
    d2 = 2.0 * alpha ** 3 / up ** 3 + 2.0 * alpha ** 3 / down ** 3
    return d1, d2


def reduced_objective(problem: ModelProblem, w: float) -> float:
    """Objective after eliminating w2 = 1 - w1; preconditioned if flagged."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"w={w} outside [0, 1]")
    value = _base_value(problem.alpha, w)
    if problem.preconditioned:
        return -(value ** -2.0)
    return value


def reduced_derivatives(problem: ModelProblem, w: float):
    """First and second derivative of the (possibly preconditioned) objective."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"w={w} outside [0, 1]")
    d1, d2 = _base_derivatives(problem.alpha, w)
    if not problem.preconditioned:
        return d1, d2
    f = _base_value(problem.alpha, w)
    g1 = 2.0 * f ** -3.0 * d1
    g2 = -6.0 * f ** -4.0 * d1 * d1 + 2.0 * f ** -3.0 * d2
    return g1, g2


def analytic_condition_number(problem: ModelProblem) -> float:
    """Closed-form absolute condition number of the minimizer.

    (1 + alpha/2)^3 / (2 alpha^3) unpreconditioned; exactly 2 preconditioned.
    """
    if problem.preconditioned:
        return 2.0
    a = problem.alpha
    return (1.0 + 0.5 * a) ** 3 / (2.0 * a ** 3)


def _solve_stationarity(problem: ModelProblem, target: float, tol: float = 1e-14) -> float:
    """Root of derivative(w) = target on [0, 1], Newton safeguarded by bisection."""
    lo, hi = 0.0, 1.0
    r_lo = reduced_derivatives(problem, lo)[0] - target
    r_hi = reduced_derivatives(problem, hi)[0] - target
    if r_lo == 0.0:
        return lo
    if r_hi == 0.0:
        return hi
    if r_lo * r_hi > 0.0:
        raise RootNotBracketed(
            f"derivative - ({target:.3e}) does not change sign on [0, 1]"
        )
    w = 0.5 * (lo + hi)
    for _ in range(200):
        r, slope = reduced_derivatives(problem, w)
        r -= target
        if r == 0.0:
            return w
        if (r > 0.0) == (r_hi > 0.0):
            hi = w
        else:
            lo = w
        w_next = w - r / slope if slope != 0.0 else 0.5 * (lo + hi)
        if not lo < w_next < hi:
            w_next = 0.5 * (lo + hi)
        if abs(w_next - w) <= tol:
            return w_next
        w = w_next
    return w


def empirical_condition_number(problem: ModelProblem, eps: float | None = None) -> float:
    """Estimate |g'(0)| / |g(0)| for the solution map of f'(w) = eps.

    Solves the perturbed stationarity equations f'(w) = +eps and -eps and
    central-differences the roots. The default eps scales with the curvature
    at the minimizer so the perturbed roots move by roughly 1e-8, staying
    well inside (0, 1) even when the problem is nearly flat.
    """
    if eps is None:
        _, curvature = reduced_derivatives(problem, MINIMIZER)
        eps = 1e-8 * max(abs(curvature), 1e-300)
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    w_plus = _solve_stationarity(problem, eps)
    w_minus = _solve_stationarity(problem, -eps)
    return abs(w_plus - w_minus) / (2.0 * eps * abs(MINIMIZER))
