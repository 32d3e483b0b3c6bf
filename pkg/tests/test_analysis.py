from __future__ import annotations

import numpy as np
import pytest

from gpsdrf import analysis
from gpsdrf.dataset import Dataset

from conftest import make_dataset


def test_parse_rows():
    assert analysis.parse_rows("naive") == ("naive/model_based",)
    assert analysis.parse_rows(["stratified/bootstrap", "weighted"]) == (
        "weighted/sandwich", "weighted/linearized", "weighted/bootstrap", "stratified/bootstrap")
    assert analysis.parse_rows("all") == analysis.ROWS
    assert len(analysis.ROWS) == 7
    with pytest.raises(ValueError):
        analysis.parse_rows("weighted/jackknife")


def test_analyze_all_rows(rng):
    d = make_dataset(rng, 120, 3)
    res = analysis.analyze(d, analysis.ROWS, l_count=4, n_boot=30, seed=1)
    assert not res.errors
    assert set(res.variances) == set(analysis.ROWS)
    assert res.propensity is not None and res.weights is not None
    again = analysis.analyze(d, analysis.ROWS, l_count=4, n_boot=30, seed=1)
    for row in analysis.ROWS:
        assert np.array_equal(res.se(row), again.se(row))
    pts = analysis.point_estimates(d, analysis.ESTIMATORS, 4)
    for est, beta in pts.items():
        assert np.array_equal(beta, res.beta[est])


def test_analyze_records_failures_per_method(rng):
    d = make_dataset(rng, 40, 2)
    res = analysis.analyze(d, ["naive", "stratified/pooled_model_based"], l_count=20)
    assert "naive/model_based" in res.variances
    assert "EmptyStratum" in res.errors["stratified"]
    # a perfect propensity fit knocks out the GPS methods only
    z = np.column_stack([d.t, d.z[:, 1]])
    res = analysis.analyze(Dataset(y=d.y, t=d.t, z=z), ["naive", "weighted/sandwich"])
    assert "naive" in res.beta and "DegenerateFit" in res.errors["weighted"]
