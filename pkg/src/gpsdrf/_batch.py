"""Vectorized re-estimation of many bootstrap resamples at once.

A resample is represented by its row multiplicities ``counts`` (one row per
replicate), so every resample sum is a count-weighted sum over the original
units and the heavy products go through BLAS.

Each function returns ``(betas, ok)``: rows where ``ok`` is False hit an
edge case (near-singular design, tied or thin strata, degenerate variance)
and must be recomputed with the scalar pipeline, which owns the error
semantics.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .dataset import MIN_STRATUM_ROWS, Dataset
from .drf import _SPREAD_TOL

# generous margin over the scalar rcond threshold
_RCOND_SAFE = 1e-9


def counts_of(idx: NDArray, n: int) -> NDArray:
    nb = idx.shape[0]
    flat = (np.arange(nb)[:, None] * n + idx).ravel()
    return np.bincount(flat, minlength=nb * n).reshape(nb, n).astype(np.float64)


def _propensity(d: Dataset, cnt: NDArray):
    n, p = d.n, d.p
    k = p + 1
    x = np.concatenate([np.ones((n, 1)), d.z], axis=1)
    t = d.t
    outer = (x[:, :, None] * x[:, None, :]).reshape(n, k * k)
    xtx = (cnt @ outer).reshape(-1, k, k)
    xty = cnt @ (x * t[:, None])
    ev = np.linalg.eigvalsh(xtx)
    ok = ev[:, 0] > _RCOND_SAFE * ev[:, -1]
    xtx[~ok] = np.eye(k)
    alpha = np.linalg.solve(xtx, xty[..., None])[..., 0]
    linpred = alpha @ x.T  # (nb, n), original unit order
    mu_t = cnt @ t / n
    tss = np.sum(cnt * (t - mu_t[:, None]) ** 2, axis=1)
    rss = np.sum(cnt * (t - linpred) ** 2, axis=1)
    sigma2_t = tss / (n - 1)
    sigma2 = rss / (n - p - 1)
    ok &= (tss > 0) & (sigma2 > 1e-10 * sigma2_t)
    return linpred, mu_t, sigma2_t, sigma2, ok


def weighted(d: Dataset, idx: NDArray) -> tuple[NDArray, NDArray]:
    cnt = counts_of(idx, d.n)
    linpred, mu_t, sigma2_t, sigma2, ok = _propensity(d, cnt)
    t, y = d.t, d.y
    s2t = np.where(ok, sigma2_t, 1.0)[:, None]
    s2 = np.where(ok, sigma2, 1.0)[:, None]
    logw = (-0.5 * (t - mu_t[:, None]) ** 2 / s2t - 0.5 * np.log(s2t)
            + 0.5 * (t - linpred) ** 2 / s2 + 0.5 * np.log(s2))
    w = np.exp(logw)
    cw = cnt * w
    sw = cw.sum(axis=1)
    tbar = cw @ t / sw
    ybar = cw @ y / sw
    tc = t - tbar[:, None]
    sxx = np.sum(cw * tc * tc, axis=1)
    sxy = np.sum(cw * tc * (y - ybar[:, None]), axis=1)
    finite = np.all(np.isfinite(w) & (w > 0), axis=1)
    ok &= finite & (sxx > _SPREAD_TOL * (cw @ (t * t)))
    slope = sxy / np.where(ok, sxx, 1.0)
    return np.column_stack([ybar - slope * tbar, slope]), ok


def stratified(d: Dataset, idx: NDArray, l_count: int) -> tuple[NDArray, NDArray]:
    n = d.n
    nb = idx.shape[0]
    cnt = counts_of(idx, n)
    linpred, _, _, _, ok = _propensity(d, cnt)
    if l_count == 1:
        strata = np.zeros((nb, n), dtype=np.int64)
    else:
        resampled = np.take_along_axis(linpred, idx, axis=1)
        cuts = np.quantile(resampled, np.arange(l_count + 1) / l_count, axis=1, method="linear").T
        ok &= np.all(np.diff(cuts, axis=1) > 0, axis=1)
        strata = np.zeros((nb, n), dtype=np.int64)
        for j in range(1, l_count):
            strata += cuts[:, j:j + 1] < linpred
    groups = (np.arange(nb)[:, None] * l_count + strata).ravel()
    size = nb * l_count
    c = cnt.ravel()
    tf = np.broadcast_to(d.t, (nb, n)).ravel()
    yf = np.broadcast_to(d.y, (nb, n)).ravel()
    num = np.bincount(groups, c, size)
    safe = np.where(num > 0, num, 1.0)
    tm = np.bincount(groups, c * tf, size) / safe
    ym = np.bincount(groups, c * yf, size) / safe
    tc = tf - tm[groups]
    sxx = np.bincount(groups, c * tc * tc, size)
    sxy = np.bincount(groups, c * tc * (yf - ym[groups]), size)
    stt = np.bincount(groups, c * tf * tf, size)
    good = (num >= MIN_STRATUM_ROWS) & (sxx > _SPREAD_TOL * stt)
    ok &= good.reshape(nb, l_count).all(axis=1)
    slope = sxy / np.where(good, sxx, 1.0)
    icpt = ym - slope * tm
    frac = (num / n).reshape(nb, l_count)
    beta = np.column_stack([
        np.sum(frac * icpt.reshape(nb, l_count), axis=1),
        np.sum(frac * slope.reshape(nb, l_count), axis=1),
    ])
    return beta, ok
