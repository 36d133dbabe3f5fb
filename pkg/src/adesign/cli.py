"""Command-line harness for the design experiments.

Subcommands: exp1 (prior-information sweep), exp2 (problem-size sweep),
exp3 (FitzHugh-Nagumo nonlinear design), model-sweep (condition numbers of
the two-measurement model problem). Each run prints a summary table and,
with --out, writes one CSV of trial records; exp3 additionally writes the
best preconditioned design, its trajectory, and the paired iteration traces
as sibling files. Exit codes: 0 success, 2 configuration error, 3 internal
error.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments, fhn
from .errors import ConfigError

_RUNNERS = {
    experiments.EXP1: experiments.run_exp1,
    experiments.EXP2: experiments.run_exp2,
    experiments.EXP3: experiments.run_exp3,
    experiments.MODEL_SWEEP: experiments.run_model_sweep,
}


def _parse_alphas(text: str):
    """Comma list ('1e-3,0.1,1') or log grid spec ('log:1e-6:1:5')."""
    if text.startswith("log:"):
        parts = text.split(":")
        if len(parts) != 4:
            raise ConfigError(f"bad alpha spec {text!r}, expected log:lo:hi:count")
        lo, hi, count = float(parts[1]), float(parts[2]), int(parts[3])
        if lo <= 0 or hi <= 0 or count < 1:
            raise ConfigError(f"bad alpha spec {text!r}")
        return list(np.logspace(np.log10(lo), np.log10(hi), count))
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"bad alpha list {text!r}") from exc


def _parse_sizes(text: str):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"bad size list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adesign",
        description="Relaxed A-optimal experimental design experiments",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, help_text in [
        (experiments.EXP1, "prior-information sweep (20 of 50 rows)"),
        (experiments.EXP2, "problem-size sweep (50n x 7 candidates)"),
        (experiments.EXP3, "FitzHugh-Nagumo nonlinear design"),
        (experiments.MODEL_SWEEP, "model-problem condition numbers"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--trials", type=int, default=None, help="matrices / repeats")
        p.add_argument("--seed", type=int, default=2023)
        p.add_argument("--alphas", type=str, default=None,
                       help="comma list or log:lo:hi:count")
        p.add_argument("--sizes", type=str, default=None, help="comma list of n multipliers")
        p.add_argument("--precondition", choices=["on", "off", "both"], default="both")
        p.add_argument("--out", type=str, default=None, help="CSV output path")
        p.add_argument("--paper-scale", action="store_true",
                       help="published experiment sizes instead of desk scale")
        p.add_argument("--qp-max-iter", type=int, default=None)
        p.add_argument("--sqp-max-iter", type=int, default=500)
        p.add_argument("--tol-d", type=float, default=1e-8)
    return parser


def config_from_args(args) -> experiments.ExperimentConfig:
    return experiments.ExperimentConfig(
        experiment=args.experiment,
        trials=args.trials,
        seed=args.seed,
        alphas=_parse_alphas(args.alphas) if args.alphas else None,
        sizes=_parse_sizes(args.sizes) if args.sizes else None,
        precondition=args.precondition,
        out=args.out,
        paper_scale=args.paper_scale,
        qp_max_iterations=args.qp_max_iter,
        sqp_max_iterations=args.sqp_max_iter,
        tol_d=args.tol_d,
    )


def _write_sweep_csv(rows, path) -> None:
    columns = ["alpha", "kappa_analytic_u", "kappa_empirical_u",
               "kappa_analytic_p", "kappa_empirical_p"]
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(format(row[c], ".17g") for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def _write_exp3_extras(output, out_path) -> None:
    stem = Path(out_path).with_suffix("")
    design = output.design
    if design is not None:
        lines = ["field,time,observable,value"]
        for name, value in zip(("I", "x01", "x02"), design["controls"]):
            lines.append(f"control_{name},,,{format(value, '.17g')}")
        lines.append(f"objective,,,{format(design['objective'], '.17g')}")
        model = design["model"]
        times = model.measurement_times
        weights = design["weights"]
        for i, w in enumerate(weights):
            if w > 1e-6:
                t = times[i // 2]
                observable = "x1" if i % 2 == 0 else "x2"
                lines.append(f"weight,{format(t, '.17g')},{observable},{format(w, '.17g')}")
        Path(f"{stem}_design.csv").write_text("\n".join(lines) + "\n")
        traj = fhn.integrate_with_sensitivities(
            replace(model, controls=tuple(design["controls"]))
        )
        fhn.write_trajectory_csv(traj, f"{stem}_trajectory.csv")
    if output.traces:
        lines = ["variant,iteration,direction_norm,merit,step_length,objective"]
        for variant in sorted(output.traces):
            for i, rec in enumerate(output.traces[variant], start=1):
                lines.append(
                    f"{variant},{i},{format(rec.direction_norm, '.17g')},"
                    f"{format(rec.merit, '.17g')},{format(rec.step_length, '.17g')},"
                    f"{format(rec.objective, '.17g')}"
                )
        Path(f"{stem}_trace.csv").write_text("\n".join(lines) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args).resolved()
        output = _RUNNERS[cfg.experiment](cfg)
        sys.stdout.write(output.summary)
        if cfg.out:
            if cfg.experiment == experiments.MODEL_SWEEP:
                _write_sweep_csv(output.sweep_rows, cfg.out)
            else:
                experiments.write_records_csv(output.records, cfg.out)
                if cfg.experiment == experiments.EXP3:
                    _write_exp3_extras(output, cfg.out)
            sys.stdout.write(f"wrote {cfg.out}\n")
        return 0
    except ConfigError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return 2
    except Exception:  # internal failure: report and exit 3
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
