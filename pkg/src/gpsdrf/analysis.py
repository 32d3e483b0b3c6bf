"""Run the estimator/variance combinations of the method grid on one dataset."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import drf, gps, variance
from .dataset import Dataset
from .drf import DEFAULT_STRATA
from .errors import GpsDrfError
from .variance import DEFAULT_NBOOT, VarianceEstimate

ESTIMATORS = ("naive", "weighted", "stratified")
VARIANCES = {
    "naive": ("model_based",),
    "weighted": ("sandwich", "linearized", "bootstrap"),
    "stratified": ("pooled_model_based", "pooled_linearized", "bootstrap"),
}
ROWS = tuple(f"{e}/{v}" for e in ESTIMATORS for v in VARIANCES[e])
# sub-stream tags for the two bootstraps
BOOT_TAG = {"weighted": 1, "stratified": 2}


def parse_rows(selection) -> tuple[str, ...]:
    """Expand estimator names ("weighted") or row ids ("weighted/sandwich") into row ids.

    Output keeps the canonical row order.
    """
    if isinstance(selection, str):
        selection = [s for s in selection.split(",") if s.strip()]
    wanted = set()
    for item in selection:
        item = item.strip().lower()
        if item in ("all", "*"):
            wanted.update(ROWS)
        elif item in ESTIMATORS:
            wanted.update(f"{item}/{v}" for v in VARIANCES[item])
        elif item in ROWS:
            wanted.add(item)
        else:
            raise ValueError(f"unknown method {item!r}; choose from {', '.join(ESTIMATORS + ROWS)}")
    return tuple(r for r in ROWS if r in wanted)


@dataclass
class Analysis:
    """Point estimates per estimator and covariance per method row.

    ``errors`` maps an estimator or row id to the error that prevented it.
    """

    beta: dict[str, NDArray] = field(default_factory=dict)
    variances: dict[str, VarianceEstimate] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    propensity: gps.PropensityFit | None = None
    weights: gps.WeightSet | None = None

    def se(self, row: str) -> NDArray:
        return self.variances[row].se


def analyze(
    d: Dataset,
    rows=ROWS,
    l_count: int = DEFAULT_STRATA,
    n_boot: int = DEFAULT_NBOOT,
    seed: int = 0,
    key: tuple[int, ...] = (),
    truncate: float | None = None,
) -> Analysis:
    """Fit every estimator needed by ``rows`` and every requested variance.

    Failures are recorded per estimator/row rather than raised, so one
    degenerate method does not hide the others.
    """
    rows = parse_rows(rows)
    out = Analysis()
    needed = [e for e in ESTIMATORS if any(r.startswith(e + "/") for r in rows)]

    f = None
    if "weighted" in needed or "stratified" in needed:
        try:
            f = gps.fit_propensity(d)
            out.propensity = f
        except GpsDrfError as exc:
            for e in needed:
                if e != "naive":
                    out.errors[e] = repr(exc)
            needed = [e for e in needed if e == "naive"]

    for est in needed:
        try:
            if est == "naive":
                fit = drf.fit_naive(d)
            elif est == "weighted":
                ws = gps.stabilized_weights(d, f)
                if truncate is not None:
                    ws = gps.truncate_weights(ws, truncate)
                out.weights = ws
                fit = drf.fit_weighted(d, ws)
            else:
                fit = drf.fit_stratified(d, f, l_count)
        except GpsDrfError as exc:
            out.errors[est] = repr(exc)
            continue
        out.beta[est] = fit.beta
        for row in rows:
            e, v = row.split("/")
            if e != est:
                continue
            try:
                out.variances[row] = _variance(d, f, fit, est, v, l_count, n_boot, seed, key, truncate)
            except GpsDrfError as exc:
                out.errors[row] = repr(exc)
    return out


def _variance(d, f, fit, est, v, l_count, n_boot, seed, key, truncate) -> VarianceEstimate:
    if v == "model_based":
        return variance.var_model_based(d, fit)
    if v == "sandwich":
        return variance.var_sandwich_weighted(d, fit.weights_used, fit)
    if v == "linearized":
        return variance.linearized_weighted(d, f, fit.weights_used, fit)[1]
    if v == "pooled_model_based":
        return variance.pooled_model_based(d, fit)
    if v == "pooled_linearized":
        return variance.pooled_linearized(d, fit)[1]
    return variance.var_bootstrap(d, est, n_boot, seed, (*key, BOOT_TAG[est]), l_count,
                                  truncate if est == "weighted" else None)


def point_estimates(d: Dataset, estimators=ESTIMATORS, l_count: int = DEFAULT_STRATA) -> dict[str, NDArray]:
    """Point estimates only; estimators that fail are left out."""
    out = {}
    f = None
    for est in estimators:
        try:
            if est == "naive":
                out[est] = drf.fit_naive(d).beta
                continue
            if f is None:
                f = gps.fit_propensity(d)
            if est == "weighted":
                out[est] = drf.fit_weighted(d, gps.stabilized_weights(d, f)).beta
            else:
                out[est] = drf.fit_stratified(d, f, l_count).beta
        except GpsDrfError:
            continue
    return out
