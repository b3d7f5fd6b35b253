"""Command-line front end.

Exit codes: 0 when every verdict holds (or the command produces no verdict),
3 when any verdict is inconclusive, 4 when any is violated, 2 for usage or
configuration errors and 1 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import bounds, fisher, observer, suite, tv
from .config import ExperimentConfig, load_spec, build
from .errors import ConfigError, InfoBoundsError, ModelError
from .models import Exponential, MultivariateNormal, Normal, posterior_density

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_INCONCLUSIVE, EXIT_VIOLATED = 0, 1, 2, 3, 4
DEFAULT_MODEL = "gaussian-scalar"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _samples(text: str) -> int:
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if value < 1 or value != int(value):
        raise argparse.ArgumentTypeError("samples must be a positive integer")
    return int(value)


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _parameter(values: Optional[list], model, name: str, default=0.0):
    """Scalar models take one number, vector models a full vector."""
    if values is None:
        if model.is_vector:
            return np.full(model.param_dim, float(default))
        return float(default)
    if model.is_vector:
        if len(values) != model.param_dim:
            raise ConfigError(f"--{name} needs {model.param_dim} comma-separated values")
        return np.asarray(values, dtype=float)
    if len(values) != 1:
        raise ConfigError(f"--{name} takes one value for a scalar model")
    return values[0]


def _direction(args, model):
    if not model.is_vector:
        return None
    if args.direction is None:
        raise ConfigError("vector models need --direction (a unit vector)")
    u = np.asarray(args.direction, dtype=float)
    if len(u) != model.param_dim:
        raise ConfigError(f"--direction needs {model.param_dim} values")
    return u


def _need_model(obj, what: str):
    if isinstance(obj, (Normal, Exponential)):
        raise ConfigError(f"{what} needs a joint model, not a standalone density")
    return obj


def _need_scalar(model, what: str):
    if model.is_vector:
        raise ConfigError(f"{what} is defined for scalar-parameter models only")
    return model


# --------------------------------------------------------------------------
# Commands; each returns (records, csv_rows or None, verdicts)
# --------------------------------------------------------------------------


def cmd_fi(args, obj):
    model = _need_model(obj, "fi")
    theta = _parameter(args.theta, model, "theta")
    if model.is_vector:
        r = fisher.fisher_matrix(model, theta, args.samples, args.seed, args.method, args.jobs)
    else:
        r = fisher.fisher_information(model, theta, args.samples, args.seed, args.method, args.jobs)
    return [r.to_record()], None, []


def cmd_fim(args, obj):
    model = _need_model(obj, "fim")
    if not model.is_vector:
        raise ConfigError("fim needs a vector model; use fi for scalar parameters")
    theta = _parameter(args.theta, model, "theta")
    r = fisher.fisher_matrix(model, theta, args.samples, args.seed, args.method, args.jobs)
    return [r.to_record()], None, []


def cmd_bayes_fi(args, obj):
    if isinstance(obj, (Normal, Exponential)):
        r = fisher.bayesian_fi_posterior_form(obj, args.samples, args.seed, args.method, args.jobs)
        return [r.to_record()], None, []
    model = obj
    if model.is_vector:
        r = fisher.bayesian_fim(model, args.samples, args.seed, args.method, args.jobs)
        return [r.to_record()], None, []
    recs = [
        fisher.bayesian_fi_prior_form(model, args.samples, args.seed, args.method, args.jobs).to_record(),
        fisher.bayesian_fi_posterior_form(model, args.samples, args.seed, args.method, args.jobs).to_record(),
        fisher.bayesian_fi_var_tprime(model, args.samples, args.seed, args.jobs).to_record(),
    ]
    return recs, None, []


def cmd_auc(args, obj):
    model = _need_model(obj, "auc")
    theta0 = _parameter(args.theta0, model, "theta0", 0.0)
    theta1 = _parameter(args.theta1, model, "theta1", 1.0)
    roc = observer.roc_and_auc(model, theta0, theta1, args.samples, args.seed, jobs=args.jobs)
    rec = roc.to_record()
    try:
        rec["auc_analytic"] = observer.auc_gaussian(model, theta0, theta1)
    except InfoBoundsError:
        pass
    rows = [["threshold", "fpf", "tpf"]] + [list(p) for p in roc.points]
    return [rec], rows, []


def cmd_mpe(args, obj):
    model = _need_model(obj, "mpe")
    theta0 = _parameter(args.theta0, model, "theta0", 0.0)
    theta1 = _parameter(args.theta1, model, "theta1", 1.0)
    recs = [observer.mpe(model, theta0, theta1, args.samples, args.seed, jobs=args.jobs).to_record()]
    try:
        recs.append(observer.mpe_analytic_gaussian(model, theta0, theta1).to_record())
    except InfoBoundsError:
        pass
    return recs, None, []


def _steps(args):
    return tuple(args.steps) if args.steps else bounds.DEFAULT_STEPS


def cmd_mpe_slope(args, obj):
    model = _need_model(obj, "mpe-slope")
    u = _direction(args, model)
    s = bounds.mpe_slope(model, args.side, _steps(args), args.samples, args.seed, u, args.backend or "monte_carlo",
                         args.jobs)
    rows = [["step", "quotient", "std_error"]] + [[h, q, e] for h, q, e in zip(s.step_sizes, s.quotients,
                                                                             s.quotient_se)]
    return [s.to_record()], rows, []


def cmd_tv(args, obj):
    if isinstance(obj, (Normal, Exponential)):
        dens = obj
    else:
        model = obj
        g = np.asarray(args.g if args.g is not None else np.zeros(model.data_dim), dtype=float)
        if len(g) != model.data_dim:
            raise ConfigError(f"--g needs {model.data_dim} values")
        dens = posterior_density(model, g)
        if isinstance(dens, MultivariateNormal):
            r = tv.tv_directional(dens, _direction(args, model))
            return [r.to_record()], None, []
    recs = []
    if isinstance(dens, (Normal, Exponential)):
        recs.append(tv.tv_analytic(dens).to_record())
    grid = tv.tv_grid(dens)
    recs.append(grid.to_record())
    rows = [["N", "partial_sum"]] + [[n, v] for n, v in grid.refinement]
    return recs, rows, []


def cmd_tv_average(args, obj):
    model = _need_model(obj, "tv-average")
    r = tv.tv_average(model, args.samples, seed=args.seed, u=_direction(args, model), jobs=args.jobs)
    return [r.to_record()], None, []


def _report(r):
    return [r.to_record()], None, [r.verdict]


def cmd_zz_bound(args, obj):
    model = _need_scalar(_need_model(obj, "zz-bound"), "zz-bound")
    return _report(bounds.ziv_zakai_check(model, args.samples, args.seed, args.backend or "analytic", args.jobs))


def cmd_vantrees(args, obj):
    model = _need_scalar(_need_model(obj, "vantrees"), "vantrees")
    return _report(bounds.van_trees_check(model, args.estimator, args.samples, args.seed, args.jobs))


def cmd_schwarz(args, obj):
    model = _need_model(obj, "schwarz")
    u = _direction(args, model)
    r = bounds.schwarz_bound_check(model, args.side, _steps(args), args.samples, args.seed, u,
                                   args.backend or "monte_carlo", args.jobs)
    return _report(r)


COMMANDS = {
    "fi": (cmd_fi, "Fisher information at --theta"),
    "fim": (cmd_fim, "Fisher information matrix at --theta"),
    "bayes-fi": (cmd_bayes_fi, "Bayesian Fisher information by every available route"),
    "auc": (cmd_auc, "ROC curve and AUC of the ideal observer for --theta0 vs --theta1"),
    "mpe": (cmd_mpe, "minimum probability of error for --theta0 vs --theta1"),
    "mpe-slope": (cmd_mpe_slope, "one-sided slope of the averaged error probability"),
    "tv": (cmd_tv, "total variation of a density or of the posterior at --g"),
    "tv-average": (cmd_tv_average, "data-averaged posterior total variation"),
    "zz-bound": (cmd_zz_bound, "Ziv-Zakai bound against the posterior-mean EMSE"),
    "vantrees": (cmd_vantrees, "van Trees bound against an estimator's EMSE"),
    "schwarz": (cmd_schwarz, "slope bound |slope| <= sqrt(F)/4"),
}


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------


def _flatten(rec: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in rec.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = json.dumps(v)
        else:
            out[key] = v
    return out


def _table(records: list) -> str:
    lines = []
    for rec in records:
        flat = _flatten(rec)
        width = max(len(k) for k in flat)
        for k, v in flat.items():
            if isinstance(v, float):
                v = suite.fmt(v)
            lines.append(f"{k:<{width}}  {v}")
        lines.append("")
    return "\n".join(lines)


def _csv(records: list, rows: Optional[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if rows is not None:
        w.writerows(rows)
        return buf.getvalue()
    flat = [_flatten(r) for r in records]
    keys = list(dict.fromkeys(k for f in flat for k in f))
    w.writerow(keys)
    for f in flat:
        w.writerow([f.get(k, "") for k in keys])
    return buf.getvalue()


def render(records: list, rows: Optional[list], fmt: str) -> str:
    if fmt == "json":
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    if fmt == "csv":
        return _csv(records, rows)
    return _table(records)


def _emit(text: str, out: Optional[str]):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def exit_code(verdicts: Sequence[str]) -> int:
    if bounds.VIOLATED in verdicts:
        return EXIT_VIOLATED
    if bounds.INCONCLUSIVE in verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, samples_default: int):
    p.add_argument("--model", default=DEFAULT_MODEL,
                   help="model JSON file or name[:key=value,...] (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=_samples, default=samples_default, help="Monte Carlo sample count")
    p.add_argument("--steps", type=_floats, default=None, help="decreasing step ladder, e.g. 0.2,0.1,0.05")
    p.add_argument("--out", default=None, help="write output here instead of stdout")
    p.add_argument("--format", choices=("json", "csv", "table"), default="json")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for Monte Carlo chunks")
    p.add_argument("--theta", type=_floats, default=None)
    p.add_argument("--theta0", type=_floats, default=None)
    p.add_argument("--theta1", type=_floats, default=None)
    p.add_argument("--g", type=_floats, default=None, help="data vector for the posterior")
    p.add_argument("--direction", type=_floats, default=None, help="unit direction for vector models")
    p.add_argument("--side", choices=("plus", "minus"), default="plus")
    p.add_argument("--estimator", default="posterior_mean",
                   choices=("posterior_mean", "ml_linear", "prior_mean"))
    p.add_argument("--backend", choices=("analytic", "monte_carlo"), default=None)
    p.add_argument("--method", choices=("auto", "analytic", "monte_carlo"), default="auto")
    p.add_argument("--sigmas", type=float, default=None, help="override the 3-sigma verdict rule")
    p.add_argument("--config", default=None, help="experiment config JSON; overrides the flags it sets")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="infobounds", description="Fisher information, observer performance and "
                     "posterior total variation: estimators and bound checks.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    for name, (_, help_text) in COMMANDS.items():
        default = bounds.DEFAULT_SLOPE_SAMPLES if name in ("mpe-slope", "schwarz") else 100_000
        if name == "tv-average":
            default = 10_000
        _common(sub.add_parser(name, help=help_text), default)
    rp = sub.add_parser("reproduce-paper", help="regenerate every closed-form constant and run all bound checks")
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--samples", type=_samples, default=100_000, help="per-estimate budget (slopes use 10x)")
    rp.add_argument("--out", default=None, help="write JSON lines here")
    rp.add_argument("--table", default=None, help="write the markdown table here")
    rp.add_argument("--format", choices=("json", "csv", "table"), default="table")
    rp.add_argument("--jobs", type=int, default=1)
    rp.add_argument("--sigmas", type=float, default=None)
    rp.add_argument("--timing", action="store_true", help="include wall-clock time (breaks byte-identity)")
    return parser


def _apply_config(args):
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = ExperimentConfig.from_json(fh.read())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {args.config}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {args.config}: {exc}") from exc
    if cfg.computation != args.command:
        raise ConfigError(f"config is for {cfg.computation!r}, not {args.command!r}")
    args.model_spec = cfg.model
    args.samples, args.seed, args.side, args.estimator, args.jobs = (cfg.samples, cfg.seed, cfg.side,
                                                                     cfg.estimator, cfg.jobs)
    for key in ("steps", "direction", "backend"):
        if getattr(cfg, key) is not None:
            setattr(args, key, getattr(cfg, key))
    for key in ("theta", "theta0", "theta1"):
        val = getattr(cfg, key)
        if val is not None:
            setattr(args, key, [float(v) for v in np.ravel(val)])
    if "sigmas" in cfg.tolerances:
        args.sigmas = cfg.tolerances["sigmas"]
    if cfg.outputs.get("path"):
        args.out = cfg.outputs["path"]
    if cfg.outputs.get("format"):
        args.format = cfg.outputs["format"]


def _run_reproduce(args) -> int:
    report = suite.reproduce(args.seed, args.samples, args.jobs, args.sigmas)
    table = report.to_markdown()
    lines = report.to_json_lines(args.timing)
    if args.table:
        _emit(table, args.table)
    if args.out:
        _emit(lines if args.format != "csv" else _csv(report.to_records(), None), args.out)
    if not args.out or args.format == "table":
        if args.format == "json":
            sys.stdout.write(lines)
        elif args.format == "csv":
            sys.stdout.write(_csv(report.to_records(), None))
        else:
            sys.stdout.write(table)
    if args.timing:
        print(f"wall clock: {report.wall_clock:.1f} s", file=sys.stderr)
    return exit_code([e.verdict for e in report.entries])


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    try:
        if args.command == "reproduce-paper":
            return _run_reproduce(args)
        args.model_spec = None
        if args.config:
            _apply_config(args)
        spec = args.model_spec or load_spec(args.model)
        obj = build(spec)
        records, rows, verdicts = COMMANDS[args.command][0](args, obj)
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfoBoundsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    if args.sigmas is not None and verdicts:
        # Verdicts were fixed at construction; rerun the rule on the records.
        verdicts = []
        for rec in records:
            if "verdict" in rec:
                flags = rec.get("flags") or []
                v = bounds.decide(float(rec["slack"]), math.hypot(rec["lhs_se"], rec["rhs_se"]),
                                  "eq" if rec["relation"] == "lhs == rhs" else "le", rec["atol"], flags,
                                  args.sigmas)
                rec["verdict"] = v
                verdicts.append(v)
    _emit(render(records, rows, args.format), args.out)
    return exit_code(verdicts)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
