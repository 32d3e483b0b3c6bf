"""Variance estimators for the naive, weighted and stratified dose-response fits.

================  ==========================  ===========================
estimator         variance                    accounts for GPS estimation
================  ==========================  ===========================
naive             model_based                 n/a
weighted          sandwich                    no
weighted          linearized                  yes
weighted          bootstrap                   yes
stratified        pooled_model_based          no
stratified        pooled_linearized           no
stratified        bootstrap                   yes
================  ==========================  ===========================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from . import _batch, drf, gps
from .dataset import Dataset
from .drf import DEFAULT_STRATA, DrfFit
from .errors import BootstrapDegenerate, GpsDrfError, ZeroExposureVariance
from .gps import PropensityFit, WeightSet
from .numkit import solve_spd, stream

VarianceMethod = Literal[
    "model_based", "sandwich", "linearized", "pooled_model_based", "pooled_linearized", "bootstrap"
]

Z_95 = 1.96
DEFAULT_NBOOT = 200
MAX_RETRIES = 5
MAX_FAIL_FRACTION = 0.10
# float cells per vectorized bootstrap chunk
_BATCH_CELLS = 4_000_000


@dataclass(frozen=True, eq=False)
class VarianceEstimate:
    cov: NDArray
    method: VarianceMethod
    meta: dict = field(default_factory=dict)

    @property
    def se(self) -> NDArray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def wald_ci(self, beta: NDArray) -> tuple[NDArray, NDArray]:
        half = Z_95 * self.se
        return beta - half, beta + half


@dataclass(frozen=True, eq=False)
class LinearizedVariables:
    i1: NDArray | None = None
    i2: tuple[NDArray, ...] | None = None


def _sym(a: NDArray) -> NDArray:
    return 0.5 * (a + a.T)


def _ttilde(t: NDArray) -> NDArray:
    return np.column_stack([np.ones(t.shape[0]), t])


def _ols_model_cov(t: NDArray, y: NDArray, beta: NDArray) -> NDArray:
    n = t.shape[0]
    x = _ttilde(t)
    e = y - x @ beta
    s2 = float(e @ e) / (n - 2)
    return _sym(s2 * solve_spd(x.T @ x, np.eye(2)))


def var_model_based(d: Dataset, fit: DrfFit) -> VarianceEstimate:
    """Classical OLS covariance RSS/(n-2) (X'X)^-1 of the naive fit."""
    return VarianceEstimate(_ols_model_cov(d.t, d.y, fit.beta), "model_based")


def var_sandwich_weighted(d: Dataset, ws: WeightSet, fit: DrfFit) -> VarianceEstimate:
    """HC0 sandwich A^-1 M A^-1 / n with the weights held fixed.

    No n/(n-2) finite-sample factor is applied.
    """
    n = d.n
    w = ws.w
    x = _ttilde(d.t)
    h = x * (d.y - x @ fit.beta)[:, None]
    a = (x * w[:, None]).T @ x / n
    wh = h * w[:, None]
    m = wh.T @ wh / n
    ainv_m = solve_spd(a, m)
    cov = solve_spd(a, ainv_m.T) / n
    return VarianceEstimate(_sym(cov), "sandwich")


def _block_c(d: Dataset) -> NDArray:
    n, p = d.n, d.p
    k = p + 4
    c = np.zeros((k, k))
    c[0, 0] = 1.0
    c[1, 1] = (n - 1) / n
    zt = gps.design(d.z)
    c[2:k - 1, 2:k - 1] = zt.T @ zt / n
    c[k - 1, k - 1] = (n - p - 1) / n
    return c


def linearized_weighted(
    d: Dataset, f: PropensityFit, ws: WeightSet, fit: DrfFit
) -> tuple[LinearizedVariables, VarianceEstimate]:
    """Linearized variance of the weighted fit, propagating the propensity-model estimation.

    I_i = A^-1 { w_i H_i + B C^-1 F_i },  V = sum (I_i - Ibar)(I_i - Ibar)' / (n (n-1)).
    """
    n = d.n
    w = ws.w
    x = _ttilde(d.t)
    h = x * (d.y - x @ fit.beta)[:, None]
    a = (x * w[:, None]).T @ x / n
    b = h.T @ ws.grad_w / n
    f_i = gps.estimating_functions(d, f)
    cinv_f = solve_spd(_block_c(d), f_i.T)
    inner = h * w[:, None] + (b @ cinv_f).T
    i1 = solve_spd(a, inner.T).T
    dev = i1 - i1.mean(axis=0)
    cov = dev.T @ dev / (n * (n - 1))
    return LinearizedVariables(i1=i1), VarianceEstimate(_sym(cov), "linearized")


def _strata_of(d: Dataset, fit: DrfFit):
    if fit.per_stratum is None:
        raise ValueError("stratified fit with per-stratum results required")
    for s in fit.per_stratum:
        yield s, d.t[s.index], d.y[s.index]


def pooled_model_based(d: Dataset, fit: DrfFit) -> VarianceEstimate:
    """Sum over strata of (n_l/n)^2 times the stratum's OLS model-based covariance."""
    cov = np.zeros((2, 2))
    for s, t, y in _strata_of(d, fit):
        cov += (s.n / d.n) ** 2 * _ols_model_cov(t, y, s.beta)
    return VarianceEstimate(_sym(cov), "pooled_model_based")


def pooled_linearized(d: Dataset, fit: DrfFit) -> tuple[LinearizedVariables, VarianceEstimate]:
    """Pooled variance of per-stratum linearized variables (n_l - 1 divisors)."""
    cov = np.zeros((2, 2))
    parts = []
    for l_idx, (s, t, y) in enumerate(_strata_of(d, fit), start=1):
        nl = s.n
        m = float(np.mean(t))
        s2 = float(np.var(t, ddof=1))
        if not s2 > 0:
            raise ZeroExposureVariance(l_idx)
        e = y - s.beta[0] - s.beta[1] * t
        phi = np.column_stack([e, t * e])
        mat = np.array([[s2 + m * m, -m], [-m, 1.0]]) / s2
        i2 = phi @ mat.T
        parts.append(i2)
        dev = i2 - i2.mean(axis=0)
        cov += (nl / d.n) ** 2 * (dev.T @ dev) / (nl * (nl - 1))
    return LinearizedVariables(i2=tuple(parts)), VarianceEstimate(_sym(cov), "pooled_linearized")


def refit(d: Dataset, method: str, l_count: int = DEFAULT_STRATA, truncate: float | None = None) -> NDArray:
    """Full pipeline (propensity model, then weights or strata, then the line) on ``d``."""
    f = gps.fit_propensity(d)
    if method == "weighted":
        ws = gps.stabilized_weights(d, f)
        if truncate is not None:
            ws = gps.truncate_weights(ws, truncate)
        return drf.fit_weighted(d, ws).beta
    if method == "stratified":
        return drf.fit_stratified(d, f, l_count).beta
    raise ValueError(f"bootstrap method must be 'weighted' or 'stratified', got {method!r}")


def bootstrap_replicates(
    d: Dataset,
    method: str,
    n_boot: int = DEFAULT_NBOOT,
    seed: int = 0,
    key: tuple[int, ...] = (),
    l_count: int = DEFAULT_STRATA,
    truncate: float | None = None,
) -> tuple[NDArray, int]:
    """Row-resampled re-estimates, one per replicate, plus the failed-replicate count.

    Replicate r, attempt a draws its rows from ``stream(seed, *key, r, a)``;
    a failing replicate is redrawn up to MAX_RETRIES times. Truncated weights
    skip the vectorized path.
    """
    if method not in ("weighted", "stratified"):
        raise ValueError(f"bootstrap method must be 'weighted' or 'stratified', got {method!r}")
    out = np.full((n_boot, 2), np.nan)
    done = np.zeros(n_boot, dtype=bool)
    chunk = max(1, _BATCH_CELLS // (d.n * (d.p + 1)))
    for start in range(0, n_boot if truncate is None else 0, chunk):
        reps = range(start, min(start + chunk, n_boot))
        idx = np.stack([stream(seed, *key, r, 0).integers(0, d.n, d.n) for r in reps])
        if method == "weighted":
            beta, ok = _batch.weighted(d, idx)
        else:
            beta, ok = _batch.stratified(d, idx, l_count)
        out[start:reps.stop][ok] = beta[ok]
        done[start:reps.stop] = ok

    failed = 0
    for r in np.flatnonzero(~done):
        for attempt in range(MAX_RETRIES + 1):
            idx = stream(seed, *key, r, attempt).integers(0, d.n, d.n)
            try:
                out[r] = refit(d.take(idx), method, l_count, truncate)
                done[r] = True
                break
            except GpsDrfError:
                continue
        else:
            failed += 1
    return out[done], failed


def var_bootstrap(
    d: Dataset,
    method: str,
    n_boot: int = DEFAULT_NBOOT,
    seed: int = 0,
    key: tuple[int, ...] = (),
    l_count: int = DEFAULT_STRATA,
    truncate: float | None = None,
) -> VarianceEstimate:
    """Empirical covariance (n-1 divisor) of bootstrap re-estimates of the full pipeline."""
    if n_boot < 2:
        raise ValueError("n_boot must be >= 2")
    betas, failed = bootstrap_replicates(d, method, n_boot, seed, key, l_count, truncate)
    if failed > MAX_FAIL_FRACTION * n_boot or betas.shape[0] < 2:
        raise BootstrapDegenerate(failed, n_boot)
    dev = betas - betas.mean(axis=0)
    cov = dev.T @ dev / (betas.shape[0] - 1)
    return VarianceEstimate(_sym(cov), "bootstrap",
                            {"n_boot": n_boot, "failed": failed, "estimator": method})
