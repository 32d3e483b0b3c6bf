"""Gaussian propensity model, stabilized weights and their gradient.

The nuisance vector is ordered ``gamma = (mu_t, sigma2_t, alpha_0..alpha_p, sigma2)``
everywhere: in :attr:`PropensityFit.gamma`, in the columns of
:attr:`WeightSet.grad_w` and in :func:`estimating_functions`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .dataset import Dataset
from .errors import DegenerateFit, TooFewRows, ZeroExposureVariance
from .numkit import solve_spd

# sigma2 below this fraction of sigma2_t means the covariates reproduce T exactly
_PERFECT_FIT_RATIO = 1e-14


def design(z: NDArray) -> NDArray:
    """Prepend an intercept column: rows are (1, Z_i)."""
    return np.column_stack([np.ones(z.shape[0]), z])


@dataclass(frozen=True, eq=False)
class PropensityFit:
    alpha: NDArray
    sigma2: float
    mu_t: float
    sigma2_t: float
    linpred: NDArray
    r2: float

    @property
    def gamma(self) -> NDArray:
        return np.concatenate([[self.mu_t, self.sigma2_t], self.alpha, [self.sigma2]])


@dataclass(frozen=True, eq=False)
class WeightSet:
    w: NDArray
    grad_w: NDArray


@dataclass(frozen=True)
class WeightSummary:
    min: float
    max: float
    mean: float
    cv: float
    n_above: int
    threshold: float


def fit_propensity(d: Dataset) -> PropensityFit:
    """Least-squares fit of T on (1, Z) plus the marginal mean/variance of T.

    Divisors are n-1 for the marginal variance and n-p-1 for the residual
    variance.
    """
    n, p = d.n, d.p
    if n < p + 3:
        raise TooFewRows(n, p + 3)
    t = d.t
    mu_t = float(np.mean(t))
    tc = t - mu_t
    tss = float(tc @ tc)
    if tss == 0.0:
        raise ZeroExposureVariance()
    sigma2_t = tss / (n - 1)

    x = design(d.z)
    alpha = solve_spd(x.T @ x, x.T @ t)
    linpred = x @ alpha
    resid = t - linpred
    rss = float(resid @ resid)
    sigma2 = rss / (n - p - 1)
    if not sigma2 > _PERFECT_FIT_RATIO * sigma2_t:
        raise DegenerateFit(f"residual variance {sigma2:.3g} of the propensity model is not positive")
    return PropensityFit(alpha=alpha, sigma2=sigma2, mu_t=mu_t, sigma2_t=sigma2_t,
                         linpred=linpred, r2=1.0 - rss / tss)


def _log_weights(t, linpred, mu_t, sigma2_t, sigma2):
    # log f_T(t) - log r(t | z); the 2*pi terms cancel
    return (-0.5 * (t - mu_t) ** 2 / sigma2_t - 0.5 * np.log(sigma2_t)
            + 0.5 * (t - linpred) ** 2 / sigma2 + 0.5 * np.log(sigma2))


def weights_at(d: Dataset, gamma: NDArray) -> NDArray:
    """Stabilized weights evaluated at an arbitrary nuisance vector ``gamma``."""
    gamma = np.asarray(gamma, dtype=np.float64)
    mu_t, sigma2_t, alpha, sigma2 = gamma[0], gamma[1], gamma[2:-1], gamma[-1]
    if sigma2_t <= 0 or sigma2 <= 0:
        raise DegenerateFit("weights need positive variances")
    return np.exp(_log_weights(d.t, design(d.z) @ alpha, mu_t, sigma2_t, sigma2))


def stabilized_weights(d: Dataset, f: PropensityFit) -> WeightSet:
    """Marginal-over-conditional normal density ratio and its gradient in gamma."""
    if not (f.sigma2 > 0 and f.sigma2_t > 0):
        raise DegenerateFit("weights need positive variances")
    t = d.t
    dt = t - f.mu_t
    e = t - f.linpred
    w = np.exp(_log_weights(t, f.linpred, f.mu_t, f.sigma2_t, f.sigma2))
    grad = np.column_stack([
        dt / f.sigma2_t,
        (dt**2 / f.sigma2_t - 1.0) / (2.0 * f.sigma2_t),
        -design(d.z) * (e / f.sigma2)[:, None],
        -(e**2 / f.sigma2 - 1.0) / (2.0 * f.sigma2),
    ])
    return WeightSet(w=w, grad_w=w[:, None] * grad)


def estimating_functions(d: Dataset, f: PropensityFit) -> NDArray:
    """Per-unit estimating functions of the nuisance parameters, shape (n, p+4).

    Their column sums vanish at the fitted values.
    """
    n, p = d.n, d.p
    dt = d.t - f.mu_t
    e = d.t - f.linpred
    return np.column_stack([
        dt,
        dt**2 - (n - 1) / n * f.sigma2_t,
        design(d.z) * e[:, None],
        e**2 - (n - p - 1) / n * f.sigma2,
    ])


def weight_diagnostics(ws: WeightSet, threshold: float = 10.0) -> WeightSummary:
    """Summary of the weight distribution; cv uses the n-1 standard deviation."""
    w = np.asarray(ws.w)
    mean = float(np.mean(w))
    sd = float(np.std(w, ddof=1)) if w.size > 1 else 0.0
    return WeightSummary(min=float(np.min(w)), max=float(np.max(w)), mean=mean,
                         cv=sd / mean, n_above=int(np.sum(w > threshold)),
                         threshold=float(threshold))


def truncate_weights(ws: WeightSet, percentile: float) -> WeightSet:
    """Cap weights at the given upper percentile; capped units get a zero gradient."""
    if not 0 < percentile <= 100:
        raise ValueError("percentile must lie in (0, 100]")
    cap = float(np.percentile(ws.w, percentile))
    capped = ws.w > cap
    grad = ws.grad_w.copy()
    grad[capped] = 0.0
    return WeightSet(w=np.minimum(ws.w, cap), grad_w=grad)
