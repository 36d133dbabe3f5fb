"""FitzHugh-Nagumo model with controls and first-order forward sensitivities.

The system

    dx1/dt = x1 - z x1^3 - x2 + I
    dx2/dt = a (x1 + b + c x2)

is integrated together with its variational equations dS/dt = Jx S + Jtheta
for the four parameters theta = (z, a, b, c) and the three controls
q = (I, x01, x02), a 16-dimensional augmented system. The integrator is an
embedded Dormand-Prince 5(4) pair with standard step control; steps are
clipped to land exactly on the measurement grid t_i = 5 i, so no
interpolation error enters the design matrices. The hot loop is compiled
with numba.

The design matrix J stacks the parameter sensitivities of both observables
at every measurement time, rows ordered (x1@t1, x2@t1, x1@t2, ...); its
control derivatives are central finite differences of the sensitivities
over q, two extra integrations per control.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence, Tuple

import numpy as np
from numba import njit

from .errors import FilterExhausted, NotPositiveDefinite, StepSizeUnderflow
from .linalg import trace_of_inverse

__all__ = [
    "DEFAULT_PARAMETERS",
    "CONTROL_BOUNDS",
    "DEFAULT_TOLERANCES",
    "FhnModel",
    "SensitivityTrajectory",
    "integrate_with_sensitivities",
    "design_jacobian",
    "design_provider",
    "initial_guess_filter",
    "write_trajectory_csv",
]

DEFAULT_PARAMETERS = (0.25, 0.02, 0.7, -0.8)  # (z, a, b, c)
# control order (I, x01, x02); closed boxes so boundary optima are representable
CONTROL_BOUNDS = ((-1.0, 0.5), (-5.0, 5.0), (-5.0, 5.0))
DEFAULT_TOLERANCES = (1e-10, 1e-12)
_BOUND_SLACK = 1e-2  # finite-difference excursions just past the box are fine

_MIN_STEP = 1e-12
_N_AUG = 16  # 2 states + 2x4 parameter and 2x3 control sensitivities


@dataclass(frozen=True)
class FhnModel:
    """Model instance: fixed parameters, controls, and the measurement grid."""

    parameters: Tuple[float, float, float, float] = DEFAULT_PARAMETERS
    controls: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    n_times: int = 100

    def __post_init__(self):
        if len(self.parameters) != 4 or len(self.controls) != 3:
            raise ValueError("expected 4 parameters and 3 controls")
        if self.n_times < 1:
            raise ValueError("need at least one measurement time")
        for value, (low, high) in zip(self.controls, CONTROL_BOUNDS):
            if not (low - _BOUND_SLACK <= value <= high + _BOUND_SLACK):
                raise ValueError(f"control {value} outside bounds [{low}, {high}]")

    @property
    def measurement_times(self) -> np.ndarray:
        return 5.0 * np.arange(1, self.n_times + 1)

    @property
    def n_candidates(self) -> int:
        return 2 * self.n_times

    def control_lower(self) -> np.ndarray:
        return np.array([b[0] for b in CONTROL_BOUNDS])

    def control_upper(self) -> np.ndarray:
        return np.array([b[1] for b in CONTROL_BOUNDS])


@dataclass
class SensitivityTrajectory:
    times: np.ndarray  # (T,)
    states: np.ndarray  # (T, 2)
    sens_p: np.ndarray  # (T, 2, 4) d state / d parameter
    sens_q: np.ndarray  # (T, 2, 3) d state / d control


@njit(cache=True)
def _rhs(y, z, a, b, c, amp, out):
    x1 = y[0]
    x2 = y[1]
    out[0] = x1 - z * x1 * x1 * x1 - x2 + amp
    out[1] = a * (x1 + b + c * x2)
    j11 = 1.0 - 3.0 * z * x1 * x1
    j22 = a * c
    # sensitivity columns: theta = (z, a, b, c, I, x01, x02)
    for k in range(7):
        s1 = y[2 + 2 * k]
        s2 = y[3 + 2 * k]
        out[2 + 2 * k] = j11 * s1 - s2
        out[3 + 2 * k] = a * s1 + j22 * s2
    out[2] += -x1 * x1 * x1  # d/dz
    out[5] += x1 + b + c * x2  # d/da
    out[7] += a  # d/db
    out[9] += a * x2  # d/dc
    out[10] += 1.0  # d/dI


@njit(cache=True)
def _advance(y, z, a, b, c, amp, t_stops, rtol, atol, fixed_h, out):
    """March the augmented system, writing the state at every stop.

    fixed_h > 0 disables the error control and uses the fifth-order solution
    with constant steps (clipped onto the stops). Returns 0 on success, 1 on
    step-size underflow.
    """
    n = y.size
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    ytmp = np.empty(n)
    y5 = np.empty(n)
    t = 0.0
    h = fixed_h if fixed_h > 0.0 else 1e-2
    _rhs(y, z, a, b, c, amp, k1)
    for si in range(t_stops.size):
        t_stop = t_stops[si]
        while t < t_stop:
            if h < _MIN_STEP:
                return 1
            h_try = h
            hit = False
            if t + h_try >= t_stop - 1e-10 * (1.0 + abs(t_stop)):
                h_try = t_stop - t
                hit = True
            # Dormand-Prince 5(4) stages (FSAL: k1 carries over)
            for i in range(n):
                ytmp[i] = y[i] + h_try * (0.2 * k1[i])
            _rhs(ytmp, z, a, b, c, amp, k2)
            for i in range(n):
                ytmp[i] = y[i] + h_try * (3.0 / 40.0 * k1[i] + 9.0 / 40.0 * k2[i])
            _rhs(ytmp, z, a, b, c, amp, k3)
            for i in range(n):
                ytmp[i] = y[i] + h_try * (
                    44.0 / 45.0 * k1[i] - 56.0 / 15.0 * k2[i] + 32.0 / 9.0 * k3[i]
                )
            _rhs(ytmp, z, a, b, c, amp, k4)
            for i in range(n):
                ytmp[i] = y[i] + h_try * (
                    19372.0 / 6561.0 * k1[i]
                    - 25360.0 / 2187.0 * k2[i]
                    + 64448.0 / 6561.0 * k3[i]
                    - 212.0 / 729.0 * k4[i]
                )
            _rhs(ytmp, z, a, b, c, amp, k5)
            for i in range(n):
                ytmp[i] = y[i] + h_try * (
                    9017.0 / 3168.0 * k1[i]
                    - 355.0 / 33.0 * k2[i]
                    + 46732.0 / 5247.0 * k3[i]
                    + 49.0 / 176.0 * k4[i]
                    - 5103.0 / 18656.0 * k5[i]
                )
            _rhs(ytmp, z, a, b, c, amp, k6)
            for i in range(n):
                y5[i] = y[i] + h_try * (
                    35.0 / 384.0 * k1[i]
                    + 500.0 / 1113.0 * k3[i]
                    + 125.0 / 192.0 * k4[i]
                    - 2187.0 / 6784.0 * k5[i]
                    + 11.0 / 84.0 * k6[i]
                )
            _rhs(y5, z, a, b, c, amp, k7)
            if fixed_h > 0.0:
                t = t_stop if hit else t + h_try
                for i in range(n):
                    y[i] = y5[i]
                    k1[i] = k7[i]
                continue
            err_sq = 0.0
            for i in range(n):
                e = h_try * (
                    71.0 / 57600.0 * k1[i]
                    - 71.0 / 16695.0 * k3[i]
                    + 71.0 / 1920.0 * k4[i]
                    - 17253.0 / 339200.0 * k5[i]
                    + 22.0 / 525.0 * k6[i]
                    - 1.0 / 40.0 * k7[i]
                )
                scale = atol + rtol * max(abs(y[i]), abs(y5[i]))
                err_sq += (e / scale) ** 2
            err = np.sqrt(err_sq / n)
            if err <= 1.0:
                t = t_stop if hit else t + h_try
                for i in range(n):
                    y[i] = y5[i]
                    k1[i] = k7[i]
                if not hit:
                    factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                    h = h_try * factor
            else:
                h = h_try * max(0.2, 0.9 * err ** -0.2)
        out[si] = y
    return 0


def _initial_state(controls) -> np.ndarray:
    y0 = np.zeros(_N_AUG)
    y0[0] = controls[1]  # x01
    y0[1] = controls[2]  # x02
    y0[2 + 2 * 5 + 0] = 1.0  # d x1 / d x01
    y0[2 + 2 * 6 + 1] = 1.0  # d x2 / d x02
    return y0


def integrate_with_sensitivities(
    model: FhnModel,
    tolerances: Tuple[float, float] = DEFAULT_TOLERANCES,
    fixed_step: float | None = None,
) -> SensitivityTrajectory:
    """Integrate states and sensitivities onto the measurement grid.

    ``fixed_step`` replaces the adaptive error control by constant steps of
    that size (used by the convergence-order study).

    Raises
    ------
    StepSizeUnderflow
        If the adaptive step shrinks below 1e-12 (solution blow-up).
    """
    rtol, atol = tolerances
    if rtol <= 0.0 or atol <= 0.0:
        raise ValueError("tolerances must be positive")
    z, a, b, c = (float(v) for v in model.parameters)
    amp = float(model.controls[0])
    stops = model.measurement_times
    out = np.empty((stops.size, _N_AUG))
    status = _advance(
        _initial_state(model.controls),
        z,
        a,
        b,
        c,
        amp,
        stops,
        float(rtol),
        float(atol),
        float(fixed_step) if fixed_step else 0.0,
        out,
    )
    if status == 1:
        raise StepSizeUnderflow("integrator step fell below 1e-12")
    states = out[:, :2].copy()
    sens = out[:, 2:].reshape(stops.size, 7, 2)  # column-interleaved layout
    sens_p = np.ascontiguousarray(sens[:, :4, :].transpose(0, 2, 1))
    sens_q = np.ascontiguousarray(sens[:, 4:, :].transpose(0, 2, 1))
    return SensitivityTrajectory(times=stops, states=states, sens_p=sens_p, sens_q=sens_q)


def _jacobian_only(model: FhnModel, q, tolerances) -> np.ndarray:
    traj = integrate_with_sensitivities(replace(model, controls=tuple(q)), tolerances)
    return traj.sens_p.reshape(model.n_candidates, 4)


def design_jacobian(
    model: FhnModel,
    q,
    tolerances: Tuple[float, float] = DEFAULT_TOLERANCES,
    fd_step: float = 1e-5,
):
    """Design matrix J(q) and its control derivatives dJ/dq_k.

    Rows of J are the parameter sensitivities at the measurement grid in the
    order (x1@t1, x2@t1, x1@t2, ...). The mixed derivatives over controls are
    central differences of the sensitivities, two integrations per control.
    """
    q = np.asarray(q, dtype=float)
    J = _jacobian_only(model, q, tolerances)
    derivatives = []
    for k in range(q.size):
        h = fd_step * (1.0 + abs(q[k]))
        qp = q.copy()
        qm = q.copy()
        qp[k] += h
        qm[k] -= h
        derivatives.append((_jacobian_only(model, qp, tolerances) - _jacobian_only(model, qm, tolerances)) / (2.0 * h))
    return J, derivatives


def design_provider(model: FhnModel, tolerances=DEFAULT_TOLERANCES, fd_step: float = 1e-5, cache_size: int = 8):
    """Callbacks (jacobian_fn, jacobian_derivatives_fn) with a small cache.

    The line search evaluates the objective at several trial controls and the
    gradient only at accepted points; caching by the control bytes avoids
    re-integrating when both are requested at the same q.
    """
    plain: dict = {}
    with_derivatives: dict = {}

    def _prune(cache):
        while len(cache) > cache_size:
            cache.pop(next(iter(cache)))

    def jacobian_fn(q):
        q = np.asarray(q, dtype=float)
        key = q.tobytes()
        if key in with_derivatives:
            return with_derivatives[key][0]
        if key not in plain:
            plain[key] = _jacobian_only(model, q, tolerances)
            _prune(plain)
        return plain[key]

    def jacobian_derivatives_fn(q):
        q = np.asarray(q, dtype=float)
        key = q.tobytes()
        if key not in with_derivatives:
            with_derivatives[key] = design_jacobian(model, q, tolerances, fd_step)
            _prune(with_derivatives)
        return with_derivatives[key]

    return jacobian_fn, jacobian_derivatives_fn


def initial_guess_filter(
    model: FhnModel,
    rng: np.random.Generator,
    threshold: float = 100.0,
    max_draws: int = 1000,
    tolerances: Tuple[float, float] = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """Uniform control draws until Tr((J'J)^-1) <= threshold.

    Rejects draws whose full-weight least-squares problem is singular or
    worse than the threshold; those controls would start the design
    optimization from a nearly unidentifiable configuration.
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    low = model.control_lower()
    high = model.control_upper()
    for _ in range(max_draws):
        q = rng.uniform(low, high)
        try:
            J = _jacobian_only(model, q, tolerances)
            if trace_of_inverse(J.T @ J) <= threshold:
                return q
        except (NotPositiveDefinite, StepSizeUnderflow):
            continue
    raise FilterExhausted(f"no admissible initial guess in {max_draws} draws")


def write_trajectory_csv(traj: SensitivityTrajectory, path, include_sensitivities: bool = False) -> None:
    """Write columns t, x1, x2 (plus sensitivity columns on request)."""
    header = ["t", "x1", "x2"]
    if include_sensitivities:
        header += [f"dx{i+1}_dp{j+1}" for i in range(2) for j in range(4)]
        header += [f"dx{i+1}_dq{j+1}" for i in range(2) for j in range(3)]
    lines = [",".join(header)]
    for row in range(traj.times.size):
        values = [traj.times[row], traj.states[row, 0], traj.states[row, 1]]
        if include_sensitivities:
            values += list(traj.sens_p[row].ravel()) + list(traj.sens_q[row].ravel())
        lines.append(",".join(format(v, ".17g") for v in values))
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")
