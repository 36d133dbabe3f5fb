"""Experiment harness: prior-information sweep, size sweep, nonlinear design.

Each runner builds deterministic problem instances from a master seed (one
Philox substream per trial), solves the unpreconditioned and preconditioned
variants from identical starting data, and emits one flat list of trial
records plus a human-readable summary. Records serialize to CSV with
17-significant-digit floats, so a fixed seed reproduces byte-identical
output and every row parses back losslessly.

Desk-scale defaults (20 matrices, 5 prior levels, sizes 1..4, 40 measurement
times) keep the full suite in the minutes range; ``paper_scale`` switches to
the published experiment sizes.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import criterion, fhn, model_problem, sqp
from .criterion import DesignProblem
from .errors import ConfigError, EvaluationError
from .linalg import finite_difference_hessian_diagonal, random_design_matrix, rng_stream
from .qp import project_feasible

EXP1, EXP2, EXP3, MODEL_SWEEP = "exp1", "exp2", "exp3", "model-sweep"
UNPRECONDITIONED, PRECONDITIONED = "u", "p"

_STATUS_SEVERITY = {
    sqp.CONVERGED: 0,
    sqp.MAX_ITERATIONS: 1,
    sqp.QP_ITERATION_LIMIT: 2,
    sqp.EVALUATION_FAILURE: 3,
}

CSV_COLUMNS = [
    "experiment",
    "trial",
    "alpha",
    "size",
    "variant",
    "iterations",
    "status",
    "objective",
    "distance",
    "ratio",
    "content_hash",
]

__all__ = [
    "EXP1",
    "EXP2",
    "EXP3",
    "MODEL_SWEEP",
    "ExperimentConfig",
    "TrialRecord",
    "ExperimentOutput",
    "design_nlp",
    "run_exp1",
    "run_exp2",
    "run_exp3",
    "run_model_sweep",
    "write_records_csv",
    "read_records_csv",
    "records_to_csv_text",
]


@dataclass
class ExperimentConfig:
    experiment: str
    trials: Optional[int] = None
    seed: int = 2023
    alphas: Optional[Sequence[float]] = None
    sizes: Optional[Sequence[int]] = None
    precondition: str = "both"
    out: Optional[str] = None
    paper_scale: bool = False
    n_times: Optional[int] = None
    qp_max_iterations: Optional[int] = None
    sqp_max_iterations: int = 500
    tol_d: float = 1e-8

    def resolved(self) -> "ExperimentConfig":
        """Fill in desk-scale or paper-scale defaults and validate."""
        cfg = replace(self)
        if cfg.experiment not in (EXP1, EXP2, EXP3, MODEL_SWEEP):
            raise ConfigError(f"unknown experiment {cfg.experiment!r}")
        if cfg.precondition not in ("on", "off", "both"):
            raise ConfigError(f"precondition must be on/off/both, got {cfg.precondition!r}")
        if cfg.trials is None:
            cfg.trials = {
                EXP1: 200 if cfg.paper_scale else 20,
                EXP2: 200 if cfg.paper_scale else 20,
                EXP3: 5,
                MODEL_SWEEP: 1,
            }[cfg.experiment]
        if cfg.trials < 1:
            raise ConfigError("trials must be >= 1")
        if cfg.alphas is None:
            if cfg.experiment == EXP1:
                cfg.alphas = list(np.logspace(-6.0, 0.0, 11 if cfg.paper_scale else 5))
            elif cfg.experiment == MODEL_SWEEP:
                cfg.alphas = list(np.logspace(-4.0, 0.0, 9))
        if cfg.alphas is not None:
            cfg.alphas = [float(a) for a in cfg.alphas]
            if any(not 0.0 < a <= 1.0 for a in cfg.alphas):
                raise ConfigError("alpha grid must lie in (0, 1]")
        if cfg.experiment == EXP2:
            cfg.sizes = list(cfg.sizes) if cfg.sizes is not None else (
                list(range(1, 11)) if cfg.paper_scale else [1, 2, 3, 4]
            )
            if any(int(n) < 1 for n in cfg.sizes):
                raise ConfigError("size multipliers must be >= 1")
            cfg.sizes = [int(n) for n in cfg.sizes]
        if cfg.n_times is None:
            cfg.n_times = 100 if cfg.paper_scale else 40
        if cfg.n_times < 1:
            raise ConfigError("n_times must be >= 1")
        if cfg.sqp_max_iterations < 1:
            raise ConfigError("sqp_max_iterations must be >= 1")
        if cfg.tol_d <= 0.0:
            raise ConfigError("tol_d must be positive")
        return cfg

    def variants(self) -> List[str]:
        return {"on": [PRECONDITIONED], "off": [UNPRECONDITIONED]}.get(
            self.precondition, [UNPRECONDITIONED, PRECONDITIONED]
        )

    def solver_options(self) -> sqp.SqpOptions:
        return sqp.SqpOptions(
            tol_d=self.tol_d,
            max_iterations=self.sqp_max_iterations,
            qp_max_iterations=self.qp_max_iterations,
        )


@dataclass
class TrialRecord:
    experiment: str
    trial: int
    alpha: Optional[float]
    size: Optional[int]
    variant: str
    iterations: int
    status: str
    objective: float
    distance: Optional[float] = None
    ratio: Optional[float] = None
    content_hash: str = ""


@dataclass
class ExperimentOutput:
    records: List[TrialRecord]
    summary: str
    design: Optional[Dict] = None  # exp3: best preconditioned design export
    traces: Optional[Dict] = None  # exp3: paired iteration traces of that repeat
    sweep_rows: Optional[List[Dict]] = None  # model-sweep rows


def design_nlp(
    problem: DesignProblem,
    n_weights: int,
    fd_control_step: float = 1e-3,
) -> sqp.NlpSpec:
    """NLP over x = (w, q): budget equality on w, boxes on both blocks.

    The initial-Hessian diagonal is the exact weight Hessian diagonal plus
    second central differences of the objective per control coordinate.
    """
    m = n_weights
    nq = problem.n_controls

    def split(x):
        return x[:m], (x[m:] if nq else None)

    def objective(x):
        w, q = split(x)
        return criterion.objective(problem, w, q)

    def gradient(x):
        w, q = split(x)
        gw = criterion.gradient_w(problem, w, q)
        if not nq:
            return gw
        return np.concatenate([gw, criterion.gradient_q(problem, w, q)])

    def hessian_diag(x):
        w, q = split(x)
        dw = criterion.hessian_w_diagonal(problem, w, q)
        if not nq:
            return dw
        steps = fd_control_step * (1.0 + np.abs(q))
        dq = finite_difference_hessian_diagonal(
            lambda v: criterion.objective(problem, w, v), q, steps
        )
        return np.concatenate([dw, dq])

    lower = np.concatenate([np.zeros(m), problem.control_lower()]) if nq else np.zeros(m)
    upper = np.concatenate([np.ones(m), problem.control_upper()]) if nq else np.ones(m)
    eq_row = np.concatenate([np.ones(m), np.zeros(nq)]) if nq else np.ones(m)
    return sqp.NlpSpec(
        objective=objective,
        gradient=gradient,
        lower=lower,
        upper=upper,
        eq=(eq_row, float(problem.m_max)),
        initial_hessian_diagonal=hessian_diag,
    )


def _content_hash(*arrays) -> str:
    digest = hashlib.sha256()
    for a in arrays:
        digest.update(np.ascontiguousarray(a).tobytes())
    return digest.hexdigest()[:16]


def _plain_objective(problem: DesignProblem, w, q=None) -> float:
    """Final objective in Tr(M^-1) units regardless of the solver's variant."""
    try:
        return criterion.objective(replace(problem, preconditioned=False), w, q)
    except EvaluationError:
        return float("nan")


def _worst_status(*statuses) -> str:
    return max(statuses, key=lambda s: _STATUS_SEVERITY[s])


def run_exp1(config: ExperimentConfig) -> ExperimentOutput:
    """Prior-information sweep: choose 20 of 50 rows under an alpha prior.

    Every (matrix, alpha, variant) cell is solved from the two starting
    vertices (first twenty weights one, and the reverse); the record carries
    the worse iteration count and the max-norm distance between the two
    solutions, the paper's proxy for distance to the optimum.
    """
    cfg = config.resolved()
    m, n_p, m_max = 50, 7, 20
    options = cfg.solver_options()
    w_start = np.concatenate([np.ones(m_max), np.zeros(m - m_max)])
    starts = [w_start, w_start[::-1].copy()]
    records: List[TrialRecord] = []
    for trial in range(cfg.trials):
        J = random_design_matrix(m, n_p, 1e4, row_normalize=True, rng=rng_stream(cfg.seed, trial))
        for alpha in cfg.alphas:
            content = _content_hash(J, starts[0], starts[1], np.array([alpha]))
            for variant in cfg.variants():
                problem = DesignProblem(
                    jacobian=J,
                    prior_alpha=alpha,
                    m_max=m_max,
                    preconditioned=variant == PRECONDITIONED,
                )
                nlp = design_nlp(problem, m)
                reports = [sqp.solve(nlp, w0, options) for w0 in starts]
                records.append(
                    TrialRecord(
                        experiment=EXP1,
                        trial=trial,
                        alpha=alpha,
                        size=None,
                        variant=variant,
                        iterations=max(r.iterations for r in reports),
                        status=_worst_status(*(r.status for r in reports)),
                        objective=_plain_objective(problem, reports[0].x),
                        distance=float(np.abs(reports[0].x - reports[1].x).max()),
                        content_hash=content,
                    )
                )
    return ExperimentOutput(records=records, summary=_summarize_exp1(cfg, records))


def _summarize_exp1(cfg, records) -> str:
    out = io.StringIO()
    out.write(f"exp1: m=50 n=7 m_max=20, {cfg.trials} matrices, seed={cfg.seed}\n")
    out.write(f"{'alpha':>12} {'var':>4} {'mean_iter':>10} {'std_iter':>10} "
              f"{'mean_dist':>12} {'qp_fail_%':>10}\n")
    for alpha in cfg.alphas:
        for variant in cfg.variants():
            rows = [r for r in records if r.alpha == alpha and r.variant == variant]
            iters = np.array([r.iterations for r in rows], dtype=float)
            dists = np.array([r.distance for r in rows], dtype=float)
            failed = np.mean([r.status == sqp.QP_ITERATION_LIMIT for r in rows]) * 100.0
            out.write(
                f"{alpha:>12.3e} {variant:>4} {iters.mean():>10.1f} {iters.std():>10.1f} "
                f"{dists.mean():>12.3e} {failed:>10.1f}\n"
            )
    return out.getvalue()


def run_exp2(config: ExperimentConfig) -> ExperimentOutput:
    """Size sweep: 50n x 7 candidate matrices, no prior, budget 20."""
    cfg = config.resolved()
    n_p, m_max = 7, 20
    options = cfg.solver_options()
    records: List[TrialRecord] = []
    for size in cfg.sizes:
        m = 50 * size
        for trial in range(cfg.trials):
            J = random_design_matrix(
                m, n_p, 1e4, rng=rng_stream(cfg.seed, 1_000_000 * size + trial)
            )
            w0 = project_feasible(
                (np.ones(m), float(m_max)), np.zeros(m), np.ones(m), np.full(m, m_max / m)
            )
            content = _content_hash(J, w0)
            for variant in cfg.variants():
                problem = DesignProblem(
                    jacobian=J,
                    prior_alpha=None,
                    m_max=m_max,
                    preconditioned=variant == PRECONDITIONED,
                )
                report = sqp.solve(design_nlp(problem, m), w0, options)
                records.append(
                    TrialRecord(
                        experiment=EXP2,
                        trial=trial,
                        alpha=None,
                        size=size,
                        variant=variant,
                        iterations=report.iterations,
                        status=report.status,
                        objective=_plain_objective(problem, report.x),
                        content_hash=content,
                    )
                )
    return ExperimentOutput(records=records, summary=_summarize_exp2(cfg, records))


def _summarize_exp2(cfg, records) -> str:
    out = io.StringIO()
    out.write(f"exp2: 50n x 7, m_max=20, no prior, {cfg.trials} matrices per size\n")
    out.write(f"{'n':>4} {'var':>4} {'mean_iter':>10} {'std_iter':>10} {'qp_fail_%':>10}\n")
    for size in cfg.sizes:
        for variant in cfg.variants():
            rows = [r for r in records if r.size == size and r.variant == variant]
            iters = np.array([r.iterations for r in rows], dtype=float)
            failed = np.mean([r.status == sqp.QP_ITERATION_LIMIT for r in rows]) * 100.0
            out.write(
                f"{size:>4} {variant:>4} {iters.mean():>10.1f} {iters.std():>10.1f} "
                f"{failed:>10.1f}\n"
            )
    return out.getvalue()


def run_exp3(config: ExperimentConfig) -> ExperimentOutput:
    """Nonlinear design on the FitzHugh-Nagumo model, paired u/p repeats.

    Each repeat draws one admissible random control guess, starts both
    variants from the identical point (equal weights, that guess), and
    reports the Table-1 statistics: score (repeats with k_p < k_u), mean
    iteration counts, mean speed-up and its standard deviation. The best
    preconditioned design (controls, weights, trajectory) is returned for
    export.
    """
    cfg = config.resolved()
    model = fhn.FhnModel(n_times=cfg.n_times)
    m = model.n_candidates
    m_max = 30
    options = cfg.solver_options()
    records: List[TrialRecord] = []
    best = None
    traces = None
    pairs = []
    for repeat in range(cfg.trials):
        rng = rng_stream(cfg.seed, repeat)
        q0 = fhn.initial_guess_filter(model, rng)
        w0 = np.full(m, m_max / m)
        x0 = np.concatenate([w0, q0])
        content = _content_hash(x0)
        jac_fn, jac_d_fn = fhn.design_provider(model)
        repeat_reports = {}
        for variant in cfg.variants():
            problem = DesignProblem(
                jacobian_fn=jac_fn,
                jacobian_derivatives_fn=jac_d_fn,
                m_max=m_max,
                control_bounds=fhn.CONTROL_BOUNDS,
                preconditioned=variant == PRECONDITIONED,
            )
            report = sqp.solve(design_nlp(problem, m), x0, options)
            w_sol, q_sol = report.x[:m], report.x[m:]
            value = _plain_objective(problem, w_sol, q_sol)
            repeat_reports[variant] = report
            records.append(
                TrialRecord(
                    experiment=EXP3,
                    trial=repeat,
                    alpha=None,
                    size=None,
                    variant=variant,
                    iterations=report.iterations,
                    status=report.status,
                    objective=value,
                    content_hash=content,
                )
            )
            if variant == PRECONDITIONED and np.isfinite(value):
                if best is None or value < best["objective"]:
                    best = {
                        "repeat": repeat,
                        "controls": q_sol.copy(),
                        "weights": w_sol.copy(),
                        "objective": value,
                        "model": model,
                    }
                    traces = {v: repeat_reports[v].trace for v in repeat_reports}
        if len(repeat_reports) == 2:
            k_u = repeat_reports[UNPRECONDITIONED].iterations
            k_p = repeat_reports[PRECONDITIONED].iterations
            ratio = k_u / k_p if k_p else float("nan")
            pairs.append((k_u, k_p))
            for record in records[-2:]:
                record.ratio = ratio
    summary = _summarize_exp3(cfg, pairs, best)
    return ExperimentOutput(records=records, summary=summary, design=best, traces=traces)


def _summarize_exp3(cfg, pairs, best) -> str:
    out = io.StringIO()
    out.write(f"exp3: FitzHugh-Nagumo design, T={cfg.n_times}, m_max=30, {cfg.trials} repeats\n")
    if pairs:
        k_u = np.array([p[0] for p in pairs], dtype=float)
        k_p = np.array([p[1] for p in pairs], dtype=float)
        ratios = k_u / k_p
        score = int(np.sum(k_p < k_u))
        out.write(f"{'score':>8} {'<k_p>':>8} {'<k_u>':>8} {'<k_u/k_p>':>10} {'sigma':>8}\n")
        out.write(
            f"{score}:{len(pairs) - score:<5} {k_p.mean():>8.1f} {k_u.mean():>8.1f} "
            f"{ratios.mean():>10.2f} {ratios.std():>8.2f}\n"
        )
    if best is not None:
        q = best["controls"]
        out.write(
            f"best preconditioned design: I={q[0]:.4f} x01={q[1]:.4f} x02={q[2]:.4f} "
            f"objective={best['objective']:.6e}\n"
        )
    return out.getvalue()


def run_model_sweep(config: ExperimentConfig) -> ExperimentOutput:
    """Analytic vs empirical condition numbers over a prior-quality grid."""
    cfg = config.resolved()
    rows = []
    for alpha in cfg.alphas:
        plain = model_problem.ModelProblem(alpha)
        pre = model_problem.ModelProblem(alpha, preconditioned=True)
        rows.append(
            {
                "alpha": alpha,
                "kappa_analytic_u": model_problem.analytic_condition_number(plain),
                "kappa_empirical_u": model_problem.empirical_condition_number(plain),
                "kappa_analytic_p": model_problem.analytic_condition_number(pre),
                "kappa_empirical_p": model_problem.empirical_condition_number(pre),
            }
        )
    out = io.StringIO()
    out.write("model problem condition numbers\n")
    out.write(f"{'alpha':>12} {'kappa_u':>14} {'empirical_u':>14} {'kappa_p':>9} {'empirical_p':>12}\n")
    for row in rows:
        out.write(
            f"{row['alpha']:>12.3e} {row['kappa_analytic_u']:>14.6e} "
            f"{row['kappa_empirical_u']:>14.6e} {row['kappa_analytic_p']:>9.3f} "
            f"{row['kappa_empirical_p']:>12.6f}\n"
        )
    return ExperimentOutput(records=[], summary=out.getvalue(), sweep_rows=rows)


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def records_to_csv_text(records: Sequence[TrialRecord]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in records:
        lines.append(
            ",".join(
                _format_value(v)
                for v in (
                    r.experiment,
                    r.trial,
                    r.alpha,
                    r.size,
                    r.variant,
                    r.iterations,
                    r.status,
                    r.objective,
                    r.distance,
                    r.ratio,
                    r.content_hash,
                )
            )
        )
    return "\n".join(lines) + "\n"


def write_records_csv(records: Sequence[TrialRecord], path) -> None:
    with open(path, "w") as handle:
        handle.write(records_to_csv_text(records))


def read_records_csv(path) -> List[TrialRecord]:
    with open(path) as handle:
        lines = handle.read().strip().split("\n")
    if lines[0] != ",".join(CSV_COLUMNS):
        raise ValueError("unexpected CSV header")
    records = []
    for line in lines[1:]:
        parts = line.split(",")
        records.append(
            TrialRecord(
                experiment=parts[0],
                trial=int(parts[1]),
                alpha=float(parts[2]) if parts[2] else None,
                size=int(parts[3]) if parts[3] else None,
                variant=parts[4],
                iterations=int(parts[5]),
                status=parts[6],
                objective=float(parts[7]),
                distance=float(parts[8]) if parts[8] else None,
                ratio=float(parts[9]) if parts[9] else None,
                content_hash=parts[10],
            )
        )
    return records
