"""Command-line front end: ``estimate``, ``simulate`` and ``report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, gps
from .analysis import ROWS
from .dataset import load_csv
from .errors import GpsDrfError
from .report import build_report, dumps, read_metrics, render, render_figures, write_metrics

log = logging.getLogger("gpsdrf")

ESTIMATE_SCHEMA = "gpsdrf.estimate/1"
EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_ERROR = 2

_LABELS = {
    "naive/model_based": "Model-based standard error",
    "weighted/sandwich": "Sandwich standard error",
    "weighted/linearized": "Linearized standard error",
    "weighted/bootstrap": "Bootstrap standard error",
    "stratified/pooled_model_based": "Pooled model-based standard error",
    "stratified/pooled_linearized": "Pooled linearized standard error",
    "stratified/bootstrap": "Bootstrap standard error",
}


def _fail(exc: Exception) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)
    return EXIT_ERROR


def _estimate_payload(d, res: analysis.Analysis, args) -> dict:
    out = {
        "schema": ESTIMATE_SCHEMA,
        "version": __version__,
        "input": str(args.input),
        "n": d.n,
        "covariates": list(d.covariate_names),
        "strata": args.strata,
        "nboot": args.nboot,
        "seed": args.seed,
        "truncate_weights": args.truncate_weights,
    }
    f = res.propensity
    if f is not None:
        out["propensity"] = {"r2": f.r2, "alpha": f.alpha.tolist(), "sigma2": f.sigma2,
                             "mu_t": f.mu_t, "sigma2_t": f.sigma2_t}
    if res.weights is not None:
        s = gps.weight_diagnostics(res.weights, args.weight_threshold)
        out["weights"] = {"min": s.min, "max": s.max, "mean": s.mean, "cv": s.cv,
                          "threshold": s.threshold, "n_above": s.n_above}
    est = {}
    for e, beta in res.beta.items():
        est[e] = {"beta": beta.tolist(), "se": {}}
    for row, v in res.variances.items():
        e, name = row.split("/")
        entry = {"se": v.se.tolist(), "cov": v.cov.tolist()}
        if v.meta:
            entry["meta"] = {k: v.meta[k] for k in sorted(v.meta)}
        est[e]["se"][name] = entry
    out["estimators"] = est
    out["errors"] = dict(sorted(res.errors.items()))
    return out


def _estimate_text(payload: dict) -> str:
    lines = [f"{'Method':<40}{'beta0':>14}{'beta1':>14}", "-" * 68]
    for e in analysis.ESTIMATORS:
        if e not in payload["estimators"]:
            continue
        rec = payload["estimators"][e]
        b0, b1 = rec["beta"]
        lines.append(f"{e.capitalize():<40}{b0:>14.6g}{b1:>14.6g}")
        for row in ROWS:
            e2, name = row.split("/")
            if e2 == e and name in rec["se"]:
                s0, s1 = rec["se"][name]["se"]
                lines.append(f"  {_LABELS[row]:<38}{f'({s0:.6g})':>14}{f'({s1:.6g})':>14}")
    lines.append("-" * 68)
    if "propensity" in payload:
        lines.append(f"propensity R2: {payload['propensity']['r2']:.4f}")
    if "weights" in payload:
        w = payload["weights"]
        lines.append(f"weights: min {w['min']:.4g}  max {w['max']:.4g}  mean {w['mean']:.4g}  "
                     f"cv {w['cv']:.4g}  above {w['threshold']:g}: {w['n_above']}")
    for k, msg in payload["errors"].items():
        lines.append(f"FAILED {k}: {msg}")
    return "\n".join(lines) + "\n"


def cmd_estimate(args) -> int:
    try:
        rows = analysis.parse_rows(args.methods)
    except ValueError as exc:
        return _fail(exc)
    covs = [c.strip() for c in args.covariates.split(",") if c.strip()]
    try:
        d = load_csv(args.input, args.outcome, args.exposure, covs, drop_incomplete=args.drop_incomplete)
    except (GpsDrfError, OSError) as exc:
        return _fail(exc)
    if any(r.endswith("/bootstrap") for r in rows) and args.seed is None:
        return _fail(ValueError("--seed is required when bootstrap variances are requested"))
    res = analysis.analyze(d, rows, args.strata, args.nboot, args.seed or 0, (), args.truncate_weights)
    payload = _estimate_payload(d, res, args)
    if args.out:
        Path(args.out).write_text(dumps(payload) + "\n", encoding="utf-8")
    sys.stdout.write(_estimate_text(payload))
    if res.errors:
        print(json.dumps({"error": "MethodFailures", "message": payload["errors"]}), file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .config import load_config
    from .simulation import run_scenario

    overrides = {"seed": args.seed, "replicates": args.replicates, "bootstrap": args.bootstrap,
                 "empirical_sd_replicates": args.empirical_sd_replicates, "strata": args.strata,
                 "methods": args.methods, "scale": args.scale}
    try:
        cfg = load_config(args.config, overrides)
    except (GpsDrfError, OSError) as exc:
        return _fail(exc)
    rows = []
    try:
        for i, s in enumerate(cfg.scenarios, start=1):
            log.info("scenario %d/%d: n=%d r2=%g sigma2_y=%g beta1=%g", i, len(cfg.scenarios),
                     s.dgp.n, s.dgp.r2_target, s.dgp.sigma2_y, s.dgp.beta1)
            rows.extend(run_scenario(s, workers=args.threads))
    except GpsDrfError as exc:
        return _fail(exc)
    write_metrics(rows, args.out)
    log.info("wrote %d metric rows to %s", len(rows), args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        rows = read_metrics(args.metrics)
    except (GpsDrfError, OSError, json.JSONDecodeError) as exc:
        return _fail(exc)
    text = render(build_report(rows), args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.figures and rows:
        for path in render_figures(rows, args.figures):
            log.info("figure %s", path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gpsdrf", description="GPS dose-response estimation and simulation")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="fit every method on a CSV dataset")
    e.add_argument("--input", required=True)
    e.add_argument("--outcome", required=True)
    e.add_argument("--exposure", required=True)
    e.add_argument("--covariates", required=True, help="comma-separated column names")
    e.add_argument("--methods", default="naive,weighted,stratified",
                   help="estimators or estimator/variance rows, comma-separated")
    e.add_argument("--strata", type=int, default=10)
    e.add_argument("--nboot", type=int, default=200)
    e.add_argument("--seed", type=int)
    e.add_argument("--out", help="JSON report path")
    e.add_argument("--drop-incomplete", action="store_true",
                   help="drop rows with missing or unparseable values instead of failing")
    e.add_argument("--truncate-weights", type=float, metavar="PCT",
                   help="cap weights at this upper percentile (off by default)")
    e.add_argument("--weight-threshold", type=float, default=10.0)
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="run a scenario grid and write metric rows")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int, default=1, help="worker processes")
    s.add_argument("--out", required=True, help="metrics file (.csv or .json)")
    s.add_argument("--replicates", type=int)
    s.add_argument("--bootstrap", type=int)
    s.add_argument("--empirical-sd-replicates", type=int)
    s.add_argument("--strata", type=int)
    s.add_argument("--methods")
    s.add_argument("--scale", choices=("desk", "paper"))
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="pivot a metrics file by scenario and method")
    r.add_argument("--metrics", required=True)
    r.add_argument("--format", choices=("csv", "json", "md"), default="md")
    r.add_argument("--out")
    r.add_argument("--figures", metavar="DIR", help="also render PNG figures into DIR")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    np.seterr(over="ignore", under="ignore")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
