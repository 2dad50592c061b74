import math

import numpy as np
import pytest

from synflow import synthetic as sy
from synflow.causality import (
    ErrorCache,
    conditioned_gc,
    gc_significance,
    pairwise_gc,
    set_gc,
    unnormalized_gc,
)
from synflow.data import TimeSeriesSet, build_embedding, standardize
from synflow.exceptions import ConfigError, InputError, TooFewSurrogates
from synflow.regression import ModelSpec, fit_prediction_error

LIN = ModelSpec()
POLY2 = ModelSpec(kernel="polynomial", degree=2)


def _noise(seed, T, n=3):
    return standardize(TimeSeriesSet(np.column_stack([sy.gaussian(seed, k, T) for k in range(n)])))


def _chain(seed, T=500):
    e = [sy.gaussian(seed, k, T) for k in range(3)]
    x, y, z = e[0].copy(), np.zeros(T), np.zeros(T)
    for t in range(1, T):
        y[t] = 0.8 * x[t - 1] + 0.5 * e[1][t]
        z[t] = 0.8 * y[t - 1] + 0.5 * e[2][t]
    return standardize(TimeSeriesSet(np.column_stack([x, y, z]), ["x", "y", "z"]))


def test_independent_noise_pairwise_is_null():
    ts = _noise(1, 10_000, 2)
    v = pairwise_gc(ts, 0, 1, LIN)
    assert abs(v.value) < 1e-3
    assert gc_significance(v, ts) > 0.01


def test_chain_conditioned_vs_pairwise():
    # x reaches z two steps later, so two lags are needed
    spec = ModelSpec(m=2)
    cond, pair = [], []
    for s in range(30):
        ts = _chain(s)
        cond.append(conditioned_gc(ts, "z", "x", spec).value)
        pair.append(pairwise_gc(ts, "z", "x", spec).value)
    assert np.median(cond) < 0.01
    assert np.median(pair) > 0.1


def test_singleton_set_equals_conditioned():
    ts = _chain(0)
    a = set_gc(ts, "z", ["x"], LIN)
    b = conditioned_gc(ts, "z", "x", LIN)
    assert a.value == b.value
    assert b.kind == "conditioned" and a.kind == "set"


def test_full_set_case():
    ts = _chain(2)
    v = set_gc(ts, 2, [0, 1], LIN)
    only_past = fit_prediction_error(build_embedding(ts, 1, 2, []), LIN).epsilon
    full = fit_prediction_error(build_embedding(ts, 1, 2, [0, 1]), LIN).epsilon
    assert v.value == pytest.approx(math.log(only_past / full), abs=1e-12)


def test_unnormalized_recomputes_independently():
    ts = sy.gen_suppressor(1.0, 400, 3)
    v = unnormalized_gc(ts, 3, [1, 2], POLY2)
    reduced = fit_prediction_error(build_embedding(ts, 1, 3, [0]), POLY2).epsilon
    full = fit_prediction_error(build_embedding(ts, 1, 3, [0, 1, 2]), POLY2).epsilon
    assert v.value == pytest.approx(reduced - full, abs=1e-12)
    assert v.value == v.eps_reduced - v.eps_full


def test_unnormalized_additive_for_independent_sources():
    # white, independent sources acting additively
    diffs = []
    for s in range(100):
        T = 1000
        a, b, e = (sy.gaussian(s, k, T) for k in range(3))
        w = np.zeros(T)
        w[1:] = 0.6 * a[:-1] + 0.6 * b[:-1] + 0.5 * e[1:]
        ts = TimeSeriesSet(np.column_stack([a, b, w]), ["a", "b", "w"])
        cache = ErrorCache(ts, "w", LIN)
        joint = unnormalized_gc(ts, "w", ["a", "b"], LIN, cache=cache).value
        diffs.append(joint - cache.unnormalized({0}) - cache.unnormalized({1}))
    diffs = np.array(diffs)
    assert abs(diffs.mean()) < 3 * diffs.std(ddof=1) / 10


def test_null_driver_and_empty_set():
    ts = _noise(4, 2000)
    assert abs(unnormalized_gc(ts, 0, [1], LIN).value) < 5e-3
    with pytest.raises(InputError):
        unnormalized_gc(ts, 0, [], LIN)
    with pytest.raises(InputError):
        set_gc(ts, 0, [0], LIN)
    with pytest.raises(InputError):
        pairwise_gc(ts, 1, 1, LIN)


def test_log_values_nonnegative_without_regularization():
    for s in range(10):
        ts = _noise(s, 300)
        assert conditioned_gc(ts, 0, 1, LIN).value >= -1e-10
        assert pairwise_gc(ts, 0, 2, POLY2).value >= -1e-10


def test_regularized_values_not_clipped():
    ts = _noise(0, 200)
    v = conditioned_gc(ts, 0, 1, ModelSpec(regularization="ridge", ridge_lambda=0.5))
    assert v.value == math.log(v.eps_reduced / v.eps_full)


def test_suppressor_conditioned_p_small():
    ps = [gc_significance(conditioned_gc(ts, 3, 2, POLY2), ts) for ts in
          (standardize(sy.gen_suppressor(1.0, 1000, s)) for s in range(20))]
    assert np.median(ps) < 0.01


def test_significance_conventions():
    ts = _noise(0, 300)
    v = conditioned_gc(ts, 0, 1, LIN)
    assert gc_significance(v.__class__(**{**v.__dict__, "n_removed": 0}), ts) == 1.0
    with pytest.raises(TooFewSurrogates):
        gc_significance(v, ts, "surrogate", n_surrogates=10)
    with pytest.raises(ConfigError):
        gc_significance(v, ts, "bootstrap")
    g = conditioned_gc(ts, 0, 1, ModelSpec(kernel="gaussian", regularization="ridge", ridge_lambda=1e-2))
    with pytest.raises(ConfigError):
        gc_significance(g, ts, "analytic")
    r = conditioned_gc(ts, 0, 1, ModelSpec(regularization="ridge", ridge_lambda=1e-2))
    with pytest.raises(ConfigError):
        gc_significance(r, ts, "robust")


def test_surrogate_detects_coupling_and_is_reproducible():
    ts = _chain(5, 300)
    v = conditioned_gc(ts, "y", "x", LIN)
    p = gc_significance(v, ts, "surrogate", n_surrogates=20, seed=1)
    assert p == pytest.approx(1 / 21)
    assert gc_significance(v, ts, "surrogate", n_surrogates=20, seed=1) == p
    # on homoscedastic noise the surrogate and F-test p-values agree
    for s in range(5, 10):
        noise = _noise(s, 300)
        null = conditioned_gc(noise, 0, 1, LIN)
        assert abs(gc_significance(null, noise, "surrogate", seed=1) - gc_significance(null, noise)) < 0.15


def test_robust_test_calibrated_on_noise():
    rej = 0
    for s in range(200):
        ts = _noise(s, 500)
        rej += gc_significance(conditioned_gc(ts, 0, 1, POLY2), ts, "robust") < 0.05
    assert 0.01 <= rej / 200 <= 0.10


def test_hidden_source_pairwise_unaffected_by_more_drivers():
    ts2 = standardize(sy.gen_hidden_source(2, 0.5, 1000, 7))
    ts8 = standardize(sy.gen_hidden_source(8, 0.5, 1000, 7))
    assert pairwise_gc(ts2, "w", 0, LIN).value == pytest.approx(pairwise_gc(ts8, "w", 0, LIN).value, rel=0.05)
    assert conditioned_gc(ts8, "w", 0, LIN).value < conditioned_gc(ts2, "w", 0, LIN).value


def test_cache_rejects_outside_universe():
    ts = _noise(0, 200)
    cache = ErrorCache(ts, 0, LIN, universe=[1])
    with pytest.raises(InputError):
        cache.epsilon({2})
    # target removal is a no-op: its past is always kept
    assert cache.epsilon({0, 1}) == cache.epsilon({1})
