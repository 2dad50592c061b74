import itertools

import numpy as np
import pytest

from synflow import synthetic as sy
from synflow.causality import ErrorCache
from synflow.data import TimeSeriesSet, build_embedding, standardize
from synflow.exceptions import AsymmetricInput, ConfigError, InputError, SubsetTooLarge
from synflow.regression import ModelSpec, fit_prediction_error
from synflow.synergy import (
    SynergyMatrix,
    cumulant,
    cumulant_table,
    max_threads,
    pca_targets,
    psi_matrix,
    psi_pair,
    psi_pvalues,
    split_psi,
)

LIN = ModelSpec()
POLY2 = ModelSpec(kernel="polynomial", degree=2)
RIDGE = ModelSpec(regularization="ridge-gcv")


def _eps(ts, target, cond, spec):
    return fit_prediction_error(build_embedding(ts, spec.m, target, list(cond)), spec).epsilon


def test_psi_symmetric_and_recomputable():
    ts = standardize(sy.gen_suppressor(1.0, 600, 1))
    a = psi_pair(ts, 3, 1, 2, POLY2)
    b = psi_pair(ts, 3, 2, 1, POLY2)
    assert a.psi == b.psi
    cache = ErrorCache(ts, 3, POLY2)
    X = {0, 1, 2}
    du = lambda B: cache.epsilon(X - set(B)) - cache.epsilon(X)
    assert a.psi == pytest.approx(du({1, 2}) - du({1}) - du({2}), abs=1e-12)
    assert psi_pair(ts, 3, 1, 2, POLY2, verify=True).psi == a.psi


def test_psi_first_form_from_independent_fits():
    ts = standardize(sy.gen_suppressor(0.5, 400, 2))
    # first form: du over X minus j of i, minus du over X of i
    first = (_eps(ts, 3, [0], POLY2) - _eps(ts, 3, [0, 1], POLY2)) - (_eps(ts, 3, [0, 2], POLY2) - _eps(ts, 3, [0, 1, 2], POLY2))
    assert psi_pair(ts, 3, 1, 2, POLY2).psi == pytest.approx(first, abs=1e-10)


def test_suppressor_pair_is_synergetic():
    ts = standardize(sy.gen_suppressor(1.0, 1000, 0))
    assert psi_pair(ts, 3, 1, 2, POLY2).psi < -0.1


def test_independent_additive_null():
    # serially independent drivers: the target's past carries nothing about them
    psis = []
    for s in range(100):
        T = 1000
        a, b, e = (sy.gaussian(s, k, T) for k in range(3))
        w = np.zeros(T)
        w[1:] = 0.5 * a[:-1] + 0.5 * b[:-1] + 0.5 * e[1:]
        ts = TimeSeriesSet(np.column_stack([a, b, w]), ["a", "b", "w"])
        psis.append(psi_pair(ts, "w", "a", "b", LIN).psi)
    psis = np.array(psis)
    assert abs(psis.mean()) < 3 * psis.std(ddof=1) / 10


@pytest.mark.parametrize("b, sign", [(0.3, 1), (-0.3, -1)])
def test_linear_target_sign_follows_coupling(b, sign):
    vals = [psi_pair(standardize(sy.append_linear_target(sy.gen_coupled_ar(0.4, b, 5000, s), 0.3)), "z", "x", "y", LIN).psi
            for s in range(10)]
    assert all(np.sign(v) == sign for v in vals)


def test_first_cumulant():
    ts = standardize(sy.gen_suppressor(1.0, 500, 3))
    S = cumulant(ts, 3, [2], POLY2)
    assert S == pytest.approx(_eps(ts, 3, [], POLY2) - _eps(ts, 3, [2], POLY2), abs=1e-12)


def test_second_cumulant_is_minus_psi_on_the_pair():
    ts = standardize(sy.gen_suppressor(1.0, 500, 3))
    S = cumulant(ts, 3, [1, 2], POLY2)
    psi = psi_pair(ts, 3, 1, 2, POLY2, conditioning=[1, 2]).psi
    assert S == pytest.approx(-psi, abs=1e-12)


def test_third_cumulant_seven_terms():
    ts = standardize(sy.gen_suppressor(1.0, 800, 4))
    B = [0, 1, 2]
    e = lambda cond: _eps(ts, 3, cond, POLY2)
    du = lambda gamma: e(sorted(set(B) - set(gamma))) - e(B)
    seven = (du([0, 1, 2]) - du([0, 1]) - du([1, 2]) - du([0, 2]) + du([0]) + du([1]) + du([2]))
    assert cumulant(ts, 3, B, POLY2) == pytest.approx(seven, abs=1e-10)


@pytest.mark.parametrize("spec", [LIN, POLY2])
def test_mobius_consistency(spec):
    ts = standardize(sy.gen_suppressor(0.7, 400, 5))
    table = cumulant_table(ts, 3, spec)
    assert len(table.entries) == 7
    assert table.expansion_error() <= 1e-10
    full = frozenset({0, 1, 2})
    assert sum(table.entries.values()) == pytest.approx(_eps(ts, 3, [], spec) - _eps(ts, 3, [0, 1, 2], spec), abs=1e-10)
    assert table.reductions[full] == pytest.approx(sum(table.entries.values()), abs=1e-10)


def test_cumulant_cap():
    ts = TimeSeriesSet(np.random.default_rng(0).normal(size=(400, 7)))
    with pytest.raises(SubsetTooLarge):
        cumulant(ts, 0, range(1, 7), LIN)


def test_pca_perfectly_correlated_pair(rng):
    x = rng.normal(size=500)
    ts = standardize(TimeSeriesSet(np.column_stack([x, 2 * x + 1])))
    pcs = pca_targets(ts, 0.95)
    assert pcs.k == 1
    assert pcs.explained[0] == pytest.approx(1.0, abs=1e-10)


def test_pca_isotropic(rng):
    ts = standardize(TimeSeriesSet(rng.normal(size=(20_000, 6))))
    pcs = pca_targets(ts, 1.0)
    assert np.allclose(pcs.eigenvalues, 1.0, atol=0.05)
    assert pca_targets(ts, 0.5).k in (3, 4)
    assert pca_targets(ts, 2).k == 2


def test_pca_sign_rule(rng):
    X = rng.normal(size=(300, 4)) @ rng.normal(size=(4, 4))
    a = pca_targets(standardize(TimeSeriesSet(X)), 4)
    X[:, 1] *= -1
    b = pca_targets(standardize(TimeSeriesSet(X)), 4)
    for k in range(4):
        assert np.abs(a.loadings[:, k]).max() == pytest.approx(a.loadings[:, k].max())
        assert np.allclose(np.abs(a.components[:, k]), np.abs(b.components[:, k]))
    with pytest.raises(ConfigError):
        pca_targets(standardize(TimeSeriesSet(X)), 1.5)


def test_split_examples():
    z = split_psi(np.zeros((3, 3)))
    assert all(np.all(part == 0) for part in z)
    P = np.zeros((4, 4))
    P[0, 1] = P[1, 0] = 0.5
    _, _, sr, ss = split_psi(P)
    assert np.array_equal(sr, [0.5, 0.5, 0, 0]) and np.all(ss == 0)
    M = np.array([[0, 1.5, -2.0], [1.5, 0, 0.25], [-2.0, 0.25, 0]])
    r, s, _, _ = split_psi(M)
    assert np.array_equal(r - s, M) and np.all(r * s == 0)
    with pytest.raises(AsymmetricInput):
        split_psi(np.array([[0, 1.0], [0.0, 0]]))


def test_psi_matrix_properties():
    ts = standardize(sy.gen_network(500, 3))
    res = psi_matrix(ts, 4, RIDGE)
    assert np.array_equal(res.psi, res.psi.T)
    assert np.all(np.diag(res.psi) == 0)
    assert np.array_equal(res.psi_r - res.psi_s, res.psi)
    assert np.allclose(res.per_component.sum(axis=0), res.psi)
    assert res.n_lambda == 4 and len(res.lambdas) == 4
    d = res.to_dict()
    assert d["labels"] == list(ts.labels) and len(d["psi"]) == ts.n


def test_psi_matrix_thread_independent(monkeypatch):
    ts = standardize(sy.gen_network(400, 1))
    a = psi_matrix(ts, 3, RIDGE, n_jobs=1)
    b = psi_matrix(ts, 3, RIDGE, n_jobs=3)
    assert np.array_equal(a.psi, b.psi)
    monkeypatch.setenv("SYNFLOW_THREADS", "1")
    assert max_threads() == 1
    monkeypatch.setenv("SYNFLOW_THREADS", "junk")
    assert max_threads() >= 1


def test_psi_matrix_config_errors():
    ts = standardize(sy.gen_network(300, 1))
    with pytest.raises(ConfigError):
        psi_matrix(ts, 3, LIN, target_past=True)
    with pytest.raises(InputError):
        psi_matrix(ts.subset([0, 1]), 1, RIDGE)


def test_component_past_hides_single_removals():
    # the component's lags rebuild any single removed variable
    ts = standardize(sy.gen_suppressor(1.0, 2000, 0))
    pcs = pca_targets(ts, 1)
    cache = ErrorCache(ts, pcs.components[:, 0], ModelSpec(regularization="ridge", ridge_lambda=1e-10), target_past=True)
    X = set(range(4))
    for i in range(4):
        assert cache.epsilon(X - {i}) - cache.epsilon(X) < 1e-8
    res = psi_matrix(ts, 4, LIN)
    assert res.target_past is False and np.all(np.isfinite(res.psi))


def test_suppressor_among_noise_has_most_negative_pair():
    hits = 0
    spec = ModelSpec(kernel="polynomial", degree=2, regularization="ridge-gcv")
    for s in range(20):
        base = sy.gen_suppressor(1.0, 1000, s)
        noise = np.column_stack([sy.gaussian(s, 20 + k, 1000) for k in range(3)])
        ts = standardize(base.with_columns(noise, ["n1", "n2", "n3"]))
        res = psi_matrix(ts, 0.95, spec)
        i, j = np.unravel_index(np.argmin(res.psi), res.psi.shape)
        hits += {i, j} == {1, 2}
    assert hits >= 18


def test_independent_ar_below_surrogate_null():
    T, n = 800, 5
    X = np.zeros((T, n))
    e = np.column_stack([sy.gaussian(9, k, T) for k in range(n)])
    for t in range(1, T):
        X[t] = 0.5 * X[t - 1] + e[t]
    ts = standardize(TimeSeriesSet(X))
    observed = np.abs(psi_matrix(ts, 0.95, RIDGE).psi).max()
    rng = np.random.default_rng(0)
    null = []
    for _ in range(19):
        shifted = np.column_stack([np.roll(X[:, k], rng.integers(20, T - 20)) for k in range(n)])
        null.append(np.abs(psi_matrix(standardize(TimeSeriesSet(shifted)), 0.95, RIDGE).psi).max())
    assert observed < np.percentile(null, 95)


def test_pvalues_and_masking():
    ts = standardize(sy.gen_network(600, 2))
    res = psi_matrix(ts, 3, RIDGE)
    p = psi_pvalues(ts, res, "analytic")
    assert p.shape == (ts.n, ts.n) and np.array_equal(p, p.T)
    assert np.all((p > 0) & (p <= 1))
    masked = res.masked(p, 0.05)
    assert np.all(masked.psi[p >= 0.05] == 0)
    assert isinstance(masked, SynergyMatrix)
    with pytest.raises(ConfigError):
        psi_pvalues(ts, res, "magic")
