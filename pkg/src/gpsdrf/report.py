"""Metric-table persistence, pivoted summaries and figures."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, fields
from pathlib import Path

from .analysis import ROWS
from .errors import GpsDrfError
from .simulation import MetricRow

METRICS_SCHEMA = "gpsdrf.metrics/1"
REPORT_SCHEMA = "gpsdrf.report/1"
PIVOT_METRICS = ("bias", "rmse", "variability_ratio", "coverage")
SCENARIO_KEYS = ("n", "r2", "sigma2_y", "beta1_true")
COLUMNS = tuple(f.name for f in fields(MetricRow))
_INT_COLUMNS = {"n", "failures", "replicates"}
_STR_COLUMNS = {"scenario_id", "method", "parameter"}


class SchemaMismatch(GpsDrfError):
    pass


def fmt(x) -> str:
    """Numbers with 17 significant digits; NaN and infinities spelled out."""
    if isinstance(x, bool) or isinstance(x, str):
        return str(x)
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float at 17 significant digits (non-finite -> null)."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if hasattr(obj, "item"):
        return dumps(obj.item(), indent, _level)
    x = float(obj)
    return fmt(x) if math.isfinite(x) else "null"


def write_metrics(rows: list[MetricRow], path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".json":
        payload = {"schema": METRICS_SCHEMA, "rows": [asdict(r) for r in rows]}
        path.write_text(dumps(payload) + "\n", encoding="utf-8")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([fmt(getattr(r, c)) for c in COLUMNS])


def _coerce(rec: dict, where: str) -> MetricRow:
    missing = [c for c in COLUMNS if c not in rec]
    if missing:
        raise SchemaMismatch(f"{where}: missing columns {missing}")
    vals = {}
    for c in COLUMNS:
        v = rec[c]
        try:
            if c in _STR_COLUMNS:
                vals[c] = str(v)
            elif c in _INT_COLUMNS:
                vals[c] = int(v)
            else:
                vals[c] = float("nan") if v is None else float(v)
        except (TypeError, ValueError):
            raise SchemaMismatch(f"{where}: column {c!r} has invalid value {v!r}") from None
    return MetricRow(**vals)


def read_metrics(path: str | Path) -> list[MetricRow]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return []
    if path.suffix.lower() == ".json":
        payload = json.loads(text)
        if payload.get("schema") != METRICS_SCHEMA:
            raise SchemaMismatch(f"expected schema {METRICS_SCHEMA!r}, got {payload.get('schema')!r}")
        return [_coerce(r, f"rows[{i}]") for i, r in enumerate(payload.get("rows", []))]
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None:
        return []
    return [_coerce(r, f"line {i + 2}") for i, r in enumerate(reader)]


def pivot(rows: list[MetricRow], metric: str, parameter: str) -> dict:
    """Scenario-by-method table of one metric for one parameter."""
    sel = [r for r in rows if r.parameter == parameter]
    methods = [m for m in ROWS if any(r.method == m for r in sel)]
    methods += sorted({r.method for r in sel} - set(methods))
    keys = sorted({tuple(getattr(r, k) for k in SCENARIO_KEYS) for r in sel})
    cells = {(tuple(getattr(r, k) for k in SCENARIO_KEYS), r.method): getattr(r, metric) for r in sel}
    body = [[*key, *(cells.get((key, m)) for m in methods)] for key in keys]
    return {"metric": metric, "parameter": parameter, "index": list(SCENARIO_KEYS),
            "columns": methods, "rows": body}


def build_report(rows: list[MetricRow]) -> list[dict]:
    tables = []
    for parameter in ("beta0", "beta1"):
        if not any(r.parameter == parameter for r in rows):
            continue
        for metric in PIVOT_METRICS:
            tables.append(pivot(rows, metric, parameter))
    return tables


def render(tables: list[dict], fmt_name: str) -> str:
    if fmt_name == "json":
        return dumps({"schema": REPORT_SCHEMA, "tables": tables}) + "\n"
    if fmt_name == "md":
        return _render_md(tables)
    if fmt_name == "csv":
        return _render_csv(tables)
    raise ValueError(f"unknown report format {fmt_name!r}")


def _render_md(tables: list[dict]) -> str:
    out = []
    for t in tables:
        header = [*t["index"], *t["columns"]]
        out.append(f"### {t['metric']} ({t['parameter']})\n")
        out.append("| " + " | ".join(header) + " |")
        out.append("|" + "---|" * len(header))
        out.extend("| " + " | ".join(_cell(v) for v in row) + " |" for row in t["rows"])
        out.append("")
    return "\n".join(out)


def _render_csv(tables: list[dict]) -> str:
    # one long table; method columns are the union over all pivots
    if not tables:
        return ""
    seen = {c for t in tables for c in t["columns"]}
    cols = [m for m in ROWS if m in seen] + sorted(seen - set(ROWS))
    lines = [",".join(["metric", "parameter", *SCENARIO_KEYS, *cols])]
    for t in tables:
        k = len(t["index"])
        pos = {m: k + i for i, m in enumerate(t["columns"])}
        for row in t["rows"]:
            cells = [_cell(row[pos[m]]) if m in pos else "" for m in cols]
            lines.append(",".join([t["metric"], t["parameter"], *(_cell(v) for v in row[:k]), *cells]))
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def render_figures(rows: list[MetricRow], outdir: str | Path) -> list[Path]:
    """One PNG per (metric, parameter): metric against R^2, a line per method and sigma2_y."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    styles = ["-", "--", ":", "-."]
    for parameter in ("beta0", "beta1"):
        sel = [r for r in rows if r.parameter == parameter]
        if not sel:
            continue
        for metric in PIVOT_METRICS:
            fig, ax = plt.subplots(figsize=(6.4, 4.2))
            sig = sorted({r.sigma2_y for r in sel})
            for m in [m for m in ROWS if any(r.method == m for r in sel)]:
                for k, s2 in enumerate(sig):
                    pts = sorted((r.r2, getattr(r, metric)) for r in sel if r.method == m and r.sigma2_y == s2)
                    if not pts:
                        continue
                    label = m if len(sig) == 1 else f"{m}, s2y={s2:g}"
                    ax.plot(*zip(*pts), styles[k % len(styles)], marker="o", ms=3, label=label)
            if metric == "coverage":
                ax.axhline(0.95, color="grey", lw=0.8)
            elif metric == "variability_ratio":
                ax.axhline(1.0, color="grey", lw=0.8)
            elif metric == "bias":
                ax.axhline(0.0, color="grey", lw=0.8)
            ax.set_xlabel("propensity R2")
            ax.set_ylabel(metric.replace("_", " "))
            ax.set_title(parameter)
            ax.legend(fontsize=6, ncol=2)
            fig.tight_layout()
            path = outdir / f"{metric}_{parameter}.png"
            fig.savefig(path, dpi=120)
            plt.close(fig)
            written.append(path)
    return written
