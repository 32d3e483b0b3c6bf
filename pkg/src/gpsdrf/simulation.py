"""Monte-Carlo study: confounded data generation, replicate management, metrics.

Seeding: with ``key = scenario_key(dgp)``,

* analysed replicate b        -> ``stream(master_seed, key, 0, b)``
* its bootstraps              -> ``stream(master_seed, key, 0, b, tag, r, attempt)``
* empirical-SD replicate b'   -> ``stream(master_seed, key, 1, b')``

so results depend on (scenario, master_seed) only, not on worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from . import analysis
from .analysis import ESTIMATORS, ROWS
from .dataset import Dataset
from .drf import DEFAULT_STRATA
from .errors import DegenerateEmpiricalSd, GpsDrfError, SingularMatrix
from .numkit import mvn_sample, normal_cdf, stream
from .variance import MAX_FAIL_FRACTION, Z_95

TABLE1_ALPHA = (1.0, 1.5, 2.0, 3.0, -2.0, -2.0, 1.0, 1.5, 2.0, 3.0)
# the last entry is printed as a second "sigma_9"; it is sigma_10
TABLE1_SIGMA = (0.2, 0.3, -0.4, -0.3, -0.2, 0.15, 0.2, -0.2, -0.2, 0.2)

STREAM_MAIN = 0
STREAM_EMPIRICAL = 1

DESK_SCALE = {"replicates": 200, "empirical_sd_replicates": 1000, "bootstrap": 200}
PAPER_SCALE = {"replicates": 1000, "empirical_sd_replicates": 10000, "bootstrap": 200}


class TooManyFailures(GpsDrfError):
    pass


@dataclass(frozen=True)
class DgpParams:
    alpha: tuple[float, ...] = TABLE1_ALPHA
    sigma_u: tuple[float, ...] = TABLE1_SIGMA
    alpha0: float = 0.0
    beta0: float = 0.0
    beta1: float = 1.0
    r2_target: float = 0.2
    sigma2_y: float = 0.5
    n: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "sigma_u", tuple(float(s) for s in self.sigma_u))
        if len(self.alpha) != len(self.sigma_u):
            raise ValueError("alpha and sigma_u must have one entry per covariate")
        if not 0 < self.r2_target < 1:
            raise ValueError("r2_target must lie in (0, 1)")
        if not self.sigma2_y > 0:
            raise ValueError("sigma2_y must be > 0")
        if sum(s * s for s in self.sigma_u) >= 1:
            raise SingularMatrix(0.0, "latent covariance, sum(sigma_u**2) >= 1")
        if self.n < self.k + 3:
            raise ValueError(f"n must be at least k + 3 = {self.k + 3}")

    @property
    def k(self) -> int:
        return len(self.alpha)

    @property
    def noise_var(self) -> float:
        """Exposure noise variance giving the target propensity R^2."""
        s = sum(a * a for a in self.alpha)
        return s * (1.0 - self.r2_target) / self.r2_target

    def covariance(self) -> NDArray:
        k = self.k
        cov = np.eye(k + 1)
        cov[:k, k] = cov[k, :k] = self.sigma_u
        return cov


def generate_dataset(p: DgpParams, rng: np.random.Generator, return_latent: bool = False):
    """One draw of n units. The latent U is returned only on request."""
    draws = mvn_sample(rng, np.zeros(p.k + 1), p.covariance(), p.n)
    z, zu = draws[:, :p.k], draws[:, p.k]
    u = normal_cdf(zu)
    t = p.alpha0 + z @ np.asarray(p.alpha) + rng.normal(0.0, math.sqrt(p.noise_var), p.n)
    y = p.beta0 + p.beta1 * t + p.sigma2_y * u
    d = Dataset(y, t, z, tuple(f"Z{j + 1}" for j in range(p.k)))
    return (d, u) if return_latent else d


def scenario_key(p: DgpParams) -> int:
    blob = json.dumps(asdict(p), sort_keys=True).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:4], "big")


@dataclass(frozen=True)
class Scenario:
    dgp: DgpParams
    replicates: int = DESK_SCALE["replicates"]
    bootstrap: int = DESK_SCALE["bootstrap"]
    strata: int = DEFAULT_STRATA
    methods: tuple[str, ...] = ROWS
    master_seed: int = 0
    empirical_sd_replicates: int = DESK_SCALE["empirical_sd_replicates"]

    def __post_init__(self):
        object.__setattr__(self, "methods", analysis.parse_rows(self.methods))
        if self.replicates < 2 or self.empirical_sd_replicates < 2:
            raise ValueError("replicates and empirical_sd_replicates must be >= 2")

    @property
    def id(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    @property
    def key(self) -> int:
        return scenario_key(self.dgp)

    def estimators(self) -> tuple[str, ...]:
        return tuple(e for e in ESTIMATORS if any(m.startswith(e + "/") for m in self.methods))


@dataclass(frozen=True)
class MetricRow:
    scenario_id: str
    n: int
    r2: float
    sigma2_y: float
    beta1_true: float
    method: str
    parameter: str
    truth: float
    bias: float
    rmse: float
    mean_se: float
    empirical_sd: float
    variability_ratio: float
    coverage: float
    failures: int
    replicates: int

    @property
    def estimator(self) -> str:
        return self.method.split("/")[0]

    @property
    def variance(self) -> str:
        return self.method.split("/")[1]


@dataclass(frozen=True)
class Metrics:
    bias: float
    rmse: float
    mean_se: float
    empirical_sd: float
    variability_ratio: float
    coverage: float


def metric_formulas(estimates: Sequence[float], ses: Sequence[float], truth: float,
                    empirical_sd: float, strict: bool = True) -> Metrics:
    """Bias, RMSE, mean SE, variability ratio and Wald-interval coverage.

    With ``strict=False`` a zero ``empirical_sd`` yields a NaN ratio instead
    of raising DegenerateEmpiricalSd.
    """
    est = np.asarray(estimates, dtype=np.float64)
    se = np.asarray(ses, dtype=np.float64)
    if est.shape != se.shape or est.size < 2:
        raise ValueError("need equal-length estimates and ses with at least 2 entries")
    err = est - truth
    mean_se = float(np.mean(se))
    if empirical_sd == 0:
        if strict:
            raise DegenerateEmpiricalSd("empirical standard deviation is 0")
        ratio = float("nan")
    else:
        ratio = mean_se / empirical_sd
    return Metrics(
        bias=float(np.mean(err)),
        rmse=float(np.sqrt(np.mean(err**2))),
        mean_se=mean_se,
        empirical_sd=float(empirical_sd),
        variability_ratio=ratio,
        coverage=float(np.mean(np.abs(err) <= Z_95 * se)),
    )


# A replicate analyser maps (scenario, dataset, replicate index) to
# {row id: (beta, se)}; a point estimator maps (scenario, dataset) to {estimator: beta}.
Analyser = Callable[[Scenario, Dataset, int], dict]
PointEstimator = Callable[[Scenario, Dataset], dict]


def default_analyser(s: Scenario, d: Dataset, b: int) -> dict:
    res = analysis.analyze(d, s.methods, s.strata, s.bootstrap, s.master_seed, (s.key, STREAM_MAIN, b))
    return {row: (res.beta[row.split("/")[0]], res.variances[row].se)
            for row in s.methods if row in res.variances}


def default_point(s: Scenario, d: Dataset) -> dict:
    return analysis.point_estimates(d, s.estimators(), s.strata)


def _replicate(args):
    s, b, analyser = args
    d = generate_dataset(s.dgp, stream(s.master_seed, s.key, STREAM_MAIN, b))
    return analyser(s, d, b)


def _empirical(args):
    s, b, point = args
    d = generate_dataset(s.dgp, stream(s.master_seed, s.key, STREAM_EMPIRICAL, b))
    return point(s, d)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def run_scenario(s: Scenario, workers: int = 1, analyser: Analyser | None = None,
                 point: PointEstimator | None = None) -> list[MetricRow]:
    """Simulate, analyse and aggregate one scenario into one row per (method, parameter)."""
    analyser = analyser or default_analyser
    point = point or default_point
    results = _map(_replicate, [(s, b, analyser) for b in range(s.replicates)], workers)
    empirical = _map(_empirical, [(s, b, point) for b in range(s.empirical_sd_replicates)], workers)

    truth = np.array([s.dgp.beta0, s.dgp.beta1])
    emp_sd = {}
    for est in s.estimators():
        vals = np.array([e[est] for e in empirical if est in e]).reshape(-1, 2)
        if vals.shape[0] < 2:
            raise TooManyFailures(f"{est}: fewer than 2 empirical-SD replicates succeeded")
        emp_sd[est] = vals.std(axis=0, ddof=1)

    rows = []
    for method in s.methods:
        ok = [r[method] for r in results if method in r]
        failures = s.replicates - len(ok)
        if failures > MAX_FAIL_FRACTION * s.replicates or len(ok) < 2:
            raise TooManyFailures(f"{method}: {failures} of {s.replicates} replicates failed")
        betas = np.array([o[0] for o in ok])
        ses = np.array([o[1] for o in ok])
        est = method.split("/")[0]
        for j, name in enumerate(("beta0", "beta1")):
            m = metric_formulas(betas[:, j], ses[:, j], truth[j], emp_sd[est][j], strict=False)
            rows.append(MetricRow(
                scenario_id=s.id, n=s.dgp.n, r2=s.dgp.r2_target, sigma2_y=s.dgp.sigma2_y,
                beta1_true=s.dgp.beta1, method=method, parameter=name, truth=float(truth[j]),
                bias=m.bias, rmse=m.rmse, mean_se=m.mean_se, empirical_sd=m.empirical_sd,
                variability_ratio=m.variability_ratio, coverage=m.coverage,
                failures=failures, replicates=s.replicates,
            ))
    return rows


def scenario_grid(base: Scenario, n=(), r2=(), sigma2_y=(), beta1=()) -> list[Scenario]:
    """Cartesian product over the listed values; empty lists keep the base value."""
    out = []
    for nn in n or (base.dgp.n,):
        for rr in r2 or (base.dgp.r2_target,):
            for ss in sigma2_y or (base.dgp.sigma2_y,):
                for bb in beta1 or (base.dgp.beta1,):
                    dgp = replace(base.dgp, n=int(nn), r2_target=float(rr), sigma2_y=float(ss), beta1=float(bb))
                    out.append(replace(base, dgp=dgp))
    return out


def run_grid(scenarios: Sequence[Scenario], workers: int = 1) -> list[MetricRow]:
    rows = []
    for s in scenarios:
        rows.extend(run_scenario(s, workers))
    return rows
