"""Dense linear algebra, normal-distribution and RNG primitives.

Every matrix "inverse" in the estimators is realized as a Cholesky solve
through :func:`solve_spd`. Random streams follow one seeding contract:

    stream(master_seed, k1, k2, ...) = PCG64(SeedSequence(master_seed, spawn_key=(k1, k2, ...)))

``SeedSequence`` hashes the entropy and the spawn key with a documented
avalanche mixing function, so a replicate's stream depends only on its
key, never on scheduling order or worker count.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack
from scipy.special import ndtr

from .errors import EmptyInput, NonPositiveVariance, SingularMatrix

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

RCOND_MIN = 1e-12
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def cholesky_rcond(a: NDArray) -> tuple[NDArray, float]:
    """Lower Cholesky factor of ``a`` and its 1-norm reciprocal condition estimate.

    Raises SingularMatrix when the factorization fails or rcond < 1e-12.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"square matrix required, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise SingularMatrix(float("nan"), "non-finite entries")
    c, info = lapack.dpotrf(a, lower=1, clean=1)
    if info != 0:
        raise SingularMatrix(0.0, "not positive definite")
    anorm = float(np.max(np.sum(np.abs(a), axis=0)))
    rcond, info = lapack.dpocon(c, anorm, uplo="L")
    if info != 0 or not rcond >= RCOND_MIN:
        raise SingularMatrix(float(rcond))
    return c, float(rcond)


def solve_spd(a: ArrayLike, b: ArrayLike) -> NDArray:
    """Solve ``a @ x = b`` for symmetric positive definite ``a``."""
    c, _ = cholesky_rcond(np.asarray(a, dtype=np.float64))
    return sla.cho_solve((c, True), np.asarray(b, dtype=np.float64), check_finite=False)


def normal_pdf(x, mean=0.0, variance=1.0):
    """Gaussian density with the given mean and variance (not standard deviation)."""
    variance = np.asarray(variance, dtype=np.float64)
    if np.any(~(variance > 0)):
        raise NonPositiveVariance(f"variance must be > 0, got {variance}")
    z2 = (np.asarray(x, dtype=np.float64) - mean) ** 2 / variance
    out = np.exp(-0.5 * z2 - _LOG_SQRT_2PI - 0.5 * np.log(variance))
    return out if out.ndim else float(out)


def normal_cdf(x):
    """Standard normal CDF."""
    out = ndtr(np.asarray(x, dtype=np.float64))
    return out if out.ndim else float(out)


def quantiles(values: ArrayLike, probs: ArrayLike) -> NDArray:
    """Order-statistic quantiles with linear interpolation.

    The k-th smallest value (1-based) sits at probability (k-1)/(n-1).
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("quantiles of an empty vector")
    p = np.asarray(probs, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    return np.quantile(v, p, method="linear")


def stream(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent generator keyed by ``(master_seed, *keys)``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def mvn_sample(rng: np.random.Generator, mean: ArrayLike, cov: ArrayLike, count: int) -> NDArray:
    """``count`` draws from N(mean, cov) as rows, via the lower Cholesky factor."""
    mean = np.asarray(mean, dtype=np.float64)
    c, _ = cholesky_rcond(cov)
    lower = np.tril(c)
    k = mean.shape[0]
    if count == 0:
        return np.empty((0, k))
    z = rng.standard_normal((count, k))
    return mean + z @ lower.T
