import numpy as np
import pytest
from sklearn.base import clone

from synflow import synthetic as sy
from synflow.causality import conditioned_gc
from synflow.data import standardize
from synflow.estimators import (
    AutoregressivePredictor,
    ComponentTargets,
    GrangerCausality,
    RedundancyPartition,
    SynergyNetwork,
)
from synflow.regression import ModelSpec
from synflow.synergy import psi_matrix


def test_params_and_clone():
    est = SynergyNetwork(n_lambda=3, kernel="polynomial")
    params = est.get_params()
    assert params["n_lambda"] == 3 and params["target_past"] is False
    twin = clone(est).set_params(n_jobs=2)
    assert twin.kernel == "polynomial" and twin.n_jobs == 2 and est.n_jobs is None


def test_predictor_matches_least_squares(rng):
    X = rng.normal(size=(200, 3))
    y = X @ [1.0, -2.0, 0.5] + 0.1 * rng.normal(size=200)
    est = AutoregressivePredictor().fit(X, y)
    design = np.column_stack([np.ones(200), X])
    coef = np.linalg.lstsq(design, y, rcond=None)[0]
    assert np.allclose(est.predict(X), design @ coef, atol=1e-9)
    assert est.epsilon_ == pytest.approx(np.mean((y - design @ coef) ** 2), rel=1e-9)
    with pytest.raises(ValueError):
        est.predict(X[:, :2])


def test_granger_matches_functional_api():
    ts = standardize(sy.gen_suppressor(1.0, 500, 0))
    est = GrangerCausality(kernel="polynomial", significance="analytic").fit(ts.values)
    assert est.labels_ == ("x1", "x2", "x3", "x4")
    spec = ModelSpec(kernel="polynomial", degree=2)
    assert est.gc_[3, 2] == pytest.approx(conditioned_gc(ts, 3, 2, spec).value, rel=1e-12)
    assert np.all(np.diag(est.gc_) == 0) and est.pvalues_[3, 2] < 0.05


def test_partition_estimator():
    est = RedundancyPartition(target="w").fit(sy.gen_redundant_triplet(10_000, 0))
    assert est.blocks_ == [["x1", "x2"], ["x3"]]
    assert est.delta_ == pytest.approx(est.partition_.total)


def test_synergy_network_estimator():
    ts = sy.gen_network(500, 1)
    est = SynergyNetwork(n_lambda=4, kernel="polynomial").fit(ts.values)
    ref = psi_matrix(standardize(ts), 4, ModelSpec(kernel="polynomial", degree=2, regularization="ridge-gcv"))
    assert np.allclose(est.psi_, ref.psi, rtol=1e-9, atol=1e-12)
    assert len(est.communities_.communities) == 12


def test_component_targets(rng):
    X = rng.normal(size=(300, 4)) @ rng.normal(size=(4, 4))
    est = ComponentTargets(n_lambda=2).fit(X)
    Z = est.transform(X)
    assert Z.shape == (300, 2) and est.n_components_ == 2
    assert np.allclose(np.cov(Z.T), np.diag(est.explained_variance_), atol=1e-10)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        GrangerCausality().fit(np.array([[1.0, np.nan], [2.0, 3.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        GrangerCausality().fit(np.ones((50, 1)))
