"""Point estimators of the linear dose-response function mu(t) = b0 + b1 * t."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .dataset import MIN_STRATUM_ROWS, Dataset
from .errors import EmptyStratum, SingularMatrix, ZeroExposureVariance
from .gps import PropensityFit, WeightSet
from .numkit import quantiles

Method = Literal["naive", "weighted", "stratified"]

DEFAULT_STRATA = 10
# relative exposure spread below which the 2x2 normal equations are singular
_SPREAD_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class StratumFit:
    n: int
    beta: NDArray
    index: NDArray  # positions of the stratum's units in the parent dataset


@dataclass(frozen=True, eq=False)
class DrfFit:
    beta: NDArray
    method: Method
    fitted: NDArray
    per_stratum: tuple[StratumFit, ...] | None = None
    weights_used: WeightSet | None = None

    def predict(self, t):
        return predict_drf(self, t)


def line_fit(t: NDArray, y: NDArray, w: NDArray | None = None) -> NDArray | None:
    """(Weighted) least-squares intercept and slope of y on t, via centered sums.

    Returns None when t has no spread (the normal equations are singular).
    """
    if w is None:
        tbar = float(np.mean(t))
        ybar = float(np.mean(y))
        tc = t - tbar
        sxx = float(tc @ tc)
        sxy = float(tc @ (y - ybar))
        scale = float(t @ t)
    else:
        sw = float(np.sum(w))
        tbar = float(w @ t) / sw
        ybar = float(w @ y) / sw
        tc = t - tbar
        wtc = w * tc
        sxx = float(wtc @ tc)
        sxy = float(wtc @ (y - ybar))
        scale = float(w @ (t * t))
    if not sxx > _SPREAD_TOL * scale:
        return None
    slope = sxy / sxx
    return np.array([ybar - slope * tbar, slope])


def fit_naive(d: Dataset) -> DrfFit:
    """Ordinary least squares of Y on (1, T)."""
    beta = line_fit(d.t, d.y)
    if beta is None:
        raise ZeroExposureVariance()
    return DrfFit(beta=beta, method="naive", fitted=beta[0] + beta[1] * d.t)


def fit_weighted(d: Dataset, ws: WeightSet) -> DrfFit:
    """Weighted least squares of Y on (1, T) with the stabilized weights."""
    w = np.asarray(ws.w)
    if w.shape != (d.n,):
        raise ValueError("one weight per unit required")
    if not np.all(w > 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and strictly positive")
    beta = line_fit(d.t, d.y, w)
    if beta is None:
        raise SingularMatrix(0.0, "weighted design")
    return DrfFit(beta=beta, method="weighted", fitted=beta[0] + beta[1] * d.t, weights_used=ws)


def assign_strata_linpred(linpred: NDArray, l_count: int) -> NDArray:
    """Quantile strata of ``linpred``, right-closed with the lowest interval closed.

    A unit equal to a cut point goes to the lower stratum. Duplicate cut
    points are an error, never merged.
    """
    if l_count < 1:
        raise ValueError("l_count must be >= 1")
    lp = np.asarray(linpred, dtype=np.float64)
    if l_count == 1:
        if lp.size < MIN_STRATUM_ROWS:
            raise EmptyStratum(1, lp.size)
        return np.ones(lp.size, dtype=np.int64)
    cuts = quantiles(lp, np.arange(l_count + 1) / l_count)
    dup = np.flatnonzero(np.diff(cuts) <= 0)
    if dup.size:
        raise EmptyStratum(int(dup[0]) + 1, 0)
    strata = 1 + np.searchsorted(cuts[1:-1], lp, side="left")
    counts = np.bincount(strata, minlength=l_count + 1)[1:]
    small = np.flatnonzero(counts < MIN_STRATUM_ROWS)
    if small.size:
        raise EmptyStratum(int(small[0]) + 1, int(counts[small[0]]))
    return strata


def assign_strata(d: Dataset, f: PropensityFit, l_count: int = DEFAULT_STRATA) -> NDArray:
    """1-based stratum of every unit from quantiles of the propensity linear predictor."""
    if f.linpred.shape != (d.n,):
        raise ValueError("propensity fit does not match the dataset")
    return assign_strata_linpred(f.linpred, l_count)


def fit_stratified(d: Dataset, f: PropensityFit, l_count: int = DEFAULT_STRATA) -> DrfFit:
    """Per-stratum OLS lines pooled with weights n_l / n."""
    strata = assign_strata(d, f, l_count)
    per = []
    for stratum in range(1, l_count + 1):
        idx = np.flatnonzero(strata == stratum)
        beta_l = line_fit(d.t[idx], d.y[idx])
        if beta_l is None:
            raise ZeroExposureVariance(stratum)
        per.append(StratumFit(n=int(idx.size), beta=beta_l, index=idx))
    beta = sum((s.n / d.n) * s.beta for s in per)
    return DrfFit(beta=np.asarray(beta), method="stratified", fitted=beta[0] + beta[1] * d.t,
                  per_stratum=tuple(per))


def predict_drf(fit: DrfFit, t):
    out = fit.beta[0] + fit.beta[1] * np.asarray(t, dtype=np.float64)
    return out if out.ndim else float(out)
