"""Relaxed A-optimal experimental design with a nonlinear left preconditioner.

Library layout:

- ``linalg``: Cholesky, trace of inverse, seeded design-matrix generation,
  finite-difference checks
- ``criterion``: the A-criterion objective, the -z^-2 preconditioner, and
  analytic derivatives
- ``qp``: primal active-set solver for the box+equality QP subproblems
- ``sqp``: damped-BFGS SQP with an augmented Lagrangian line search
- ``model_problem``: the two-measurement model problem and its condition
  numbers
- ``fhn``: FitzHugh-Nagumo sensitivities and design matrices
- ``experiments`` / ``cli``: the experiment harness
"""

from . import criterion, errors, experiments, fhn, linalg, model_problem, qp, sqp

__all__ = ["criterion", "errors", "experiments", "fhn", "linalg", "model_problem", "qp", "sqp"]

__version__ = "0.1.0"
