"""Simulation grid configuration (YAML, schema version 1).

Example::

    version: 1
    seed: 2021                # optional here, but some seed is required
    scale: desk               # desk | paper: defaults for the counts below
    replicates: 200           # B, analysed datasets per scenario
    empirical_sd_replicates: 1000   # B', datasets for the empirical SD
    bootstrap: 200            # resamples per bootstrap variance
    strata: 10
    methods: [naive, weighted, stratified]   # estimators or "estimator/variance" rows
    grid:                     # cartesian product
      n: [1000]
      r2: [0.2, 0.4, 0.6, 0.8]
      sigma2_y: [0.25, 0.5]
      beta1: [1]
    dgp:                      # optional; defaults reproduce the paper's design
      alpha: [1, 1.5, 2, 3, -2, -2, 1, 1.5, 2, 3]
      sigma_u: [0.2, 0.3, -0.4, -0.3, -0.2, 0.15, 0.2, -0.2, -0.2, 0.2]
      alpha0: 0
      beta0: 0
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import yaml

from .analysis import ROWS, parse_rows
from .errors import ConfigError
from .simulation import DESK_SCALE, PAPER_SCALE, DgpParams, Scenario, scenario_grid

CONFIG_VERSION = 1
_TOP = {"version", "seed", "scale", "replicates", "empirical_sd_replicates", "bootstrap",
        "strata", "methods", "grid", "dgp"}
_GRID = {"n": int, "r2": float, "sigma2_y": float, "beta1": float}
_DGP = {"alpha", "sigma_u", "alpha0", "beta0"}


@dataclass
class SimConfig:
    scenarios: list[Scenario]
    seed: int


def _int(value, path: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(path, f"must be >= {minimum}")
    return value


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _num_list(value, path: str, cast=float) -> list:
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a non-empty list")
    if cast is int:
        return [_int(v, f"{path}[{i}]", 1) for i, v in enumerate(value)]
    return [_num(v, f"{path}[{i}]") for i, v in enumerate(value)]


def parse_config(raw: dict, overrides: dict | None = None) -> SimConfig:
    """Validate a parsed config mapping; ``overrides`` (from CLI flags) win over file values."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a mapping")
    raw = {**raw, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    unknown = set(raw) - _TOP
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    if raw.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError("version", f"unsupported version {raw.get('version')!r}")

    scale = raw.get("scale", "desk")
    if scale not in ("desk", "paper"):
        raise ConfigError("scale", "expected 'desk' or 'paper'")
    counts = dict(DESK_SCALE if scale == "desk" else PAPER_SCALE)
    replicates = _int(raw.get("replicates", counts["replicates"]), "replicates", 2)
    emp = _int(raw.get("empirical_sd_replicates", counts["empirical_sd_replicates"]),
               "empirical_sd_replicates", 2)
    nboot = _int(raw.get("bootstrap", counts["bootstrap"]), "bootstrap", 2)
    strata = _int(raw.get("strata", 10), "strata", 1)

    if "seed" not in raw:
        raise ConfigError("seed", "a seed is required (config key or --seed)")
    seed = _int(raw["seed"], "seed", 0)

    methods = raw.get("methods", list(ROWS))
    if isinstance(methods, str):
        methods = methods.split(",")
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods", "expected a non-empty list")
    try:
        methods = parse_rows([str(m) for m in methods])
    except ValueError as exc:
        raise ConfigError("methods", str(exc)) from None

    grid = raw.get("grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("grid", "expected a mapping")
    for key in grid:
        if key not in _GRID:
            raise ConfigError(f"grid.{key}", "unknown key")
    axes = {k: _num_list(v, f"grid.{k}", _GRID[k]) for k, v in grid.items()}
    for i, r2 in enumerate(axes.get("r2", [])):
        if not 0 < r2 < 1:
            raise ConfigError(f"grid.r2[{i}]", "must lie in (0, 1)")
    for i, s2 in enumerate(axes.get("sigma2_y", [])):
        if not s2 > 0:
            raise ConfigError(f"grid.sigma2_y[{i}]", "must be > 0")

    dgp_raw = raw.get("dgp", {})
    if not isinstance(dgp_raw, dict):
        raise ConfigError("dgp", "expected a mapping")
    dgp_kw = {}
    for key, value in dgp_raw.items():
        if key not in _DGP:
            raise ConfigError(f"dgp.{key}", "unknown key")
        dgp_kw[key] = tuple(_num_list(value, f"dgp.{key}")) if key in ("alpha", "sigma_u") else _num(value, f"dgp.{key}")
    try:
        base_dgp = DgpParams(**dgp_kw)
        base = Scenario(dgp=base_dgp, replicates=replicates, bootstrap=nboot, strata=strata,
                        methods=methods, master_seed=seed, empirical_sd_replicates=emp)
        scenarios = scenario_grid(base, axes.get("n", ()), axes.get("r2", ()),
                                  axes.get("sigma2_y", ()), axes.get("beta1", ()))
    except ValueError as exc:
        raise ConfigError("dgp", str(exc)) from None
    return SimConfig(scenarios=scenarios, seed=seed)


def load_config(path: str | Path, overrides: dict | None = None) -> SimConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    return parse_config(raw if raw is not None else {}, overrides)
