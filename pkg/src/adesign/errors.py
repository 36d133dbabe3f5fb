"""Exception types shared across the package."""


class EvaluationError(ArithmeticError):
    """Base for failures of an objective/derivative evaluation at a point.

    The SQP line search treats these as rejected trial points; raised at the
    current iterate itself they abort the solve.
    """


class NotPositiveDefinite(ArithmeticError):
    """Cholesky pivot fell below the breakdown tolerance."""


class SingularInformationMatrix(EvaluationError):
    """The information matrix is numerically singular or indefinite."""


class NonFiniteValue(EvaluationError):
    """A function evaluation produced NaN or Inf."""


class StepSizeUnderflow(EvaluationError):
    """The adaptive integrator step fell below its minimum (blow-up)."""


class DegenerateInput(ValueError):
    """Random matrix generation hit a rank-deficient draw after retries."""


class MissingJacobianDerivative(ValueError):
    """Control derivatives requested from a fixed-matrix design problem."""


class InfeasibleStart(ValueError):
    """QP starting point violates the equality or bound constraints."""


class EmptyFeasibleSet(ValueError):
    """Bounds and equality constraint admit no point."""


class DegenerateStep(ArithmeticError):
    """BFGS update received a step with non-positive curvature s'Bs."""


class LineSearchFailure(ArithmeticError):
    """Backtracking reached the minimum step without sufficient decrease."""


class RootNotBracketed(ValueError):
    """1-D root finder found no sign change over the search interval."""


class FilterExhausted(RuntimeError):
    """No admissible initial control guess found within the draw budget."""


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""
