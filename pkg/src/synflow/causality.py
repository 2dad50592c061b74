"""Granger causality measures: pairwise, conditioned, set and unnormalized.

All four measures compare the prediction error of a target with and without
the past of some driver variables. :class:`ErrorCache` memoizes those errors
per conditioning subset, so measures that share sub-models (the partition
search, the synergy index) fit each sub-model once.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .data import TARGET_BLOCK, TimeSeriesSet, build_embedding
from .exceptions import ConfigError, InputError, TooFewSurrogates
from .regression import ModelSpec, NestedDesign, PredictionError

__all__ = [
    "CausalityValue",
    "ErrorCache",
    "pairwise_gc",
    "conditioned_gc",
    "set_gc",
    "unnormalized_gc",
    "gc_significance",
]

MIN_SURROGATES = 20
SHIFT_MARGIN = 10


@dataclass(frozen=True)
class CausalityValue:
    """One causality measurement and the two errors it was computed from.

    ``value`` is ``log(eps_reduced / eps_full)`` for the log-ratio kinds and
    ``eps_reduced - eps_full`` for ``kind='unnormalized-set'``.
    """

    kind: str
    value: float
    target: int
    drivers: tuple
    conditioning: tuple
    spec: ModelSpec
    eps_reduced: float
    eps_full: float
    n_rows: int
    n_full: int
    n_removed: int
    lam: float = 0.0

    def to_dict(self, labels=None) -> dict:
        name = (lambda k: labels[k]) if labels is not None else (lambda k: k)
        return {
            "kind": self.kind,
            "value": self.value,
            "target": name(self.target),
            "drivers": [name(k) for k in self.drivers],
            "conditioning": [name(k) for k in self.conditioning],
            "eps_reduced": self.eps_reduced,
            "eps_full": self.eps_full,
            "lambda": self.lam,
        }


class ErrorCache:
    """Prediction errors of one target over subsets of a conditioning universe.

    The regression design (features, scaling, ridge parameter) is fixed on
    the model that conditions on the whole ``universe``; every sub-model is
    obtained by deleting lagged blocks from it. The target's own past is
    always part of the conditioning.

    Parameters
    ----------
    ts : TimeSeriesSet
    target : int, str or array_like
        Target column, or an external series whose lags serve as target past.
    spec : ModelSpec
    universe : iterable, optional
        Variables available for conditioning; all columns by default.
    lam : float, optional
        Override of the ridge parameter.
    target_past : bool
        Only for an external target: whether its own lags are predictors.
    """

    def __init__(self, ts: TimeSeriesSet, target, spec: ModelSpec, universe=None, lam=None, target_past=True):
        self.ts = ts
        self.spec = spec
        self.external = not (isinstance(target, (int, np.integer, str)) and not isinstance(target, bool))
        self.target = TARGET_BLOCK if self.external else ts.index(target)
        universe = range(ts.n) if universe is None else universe
        self.universe = tuple(sorted({ts.index(u) for u in universe} - {self.target}))
        self.embedding = build_embedding(ts, spec.m, target, self.universe, target_past=target_past)
        self._own = frozenset({self.target}) if (target_past or not self.external) else frozenset()
        self.design = NestedDesign(self.embedding, spec, lam=lam)
        self._errors = {}
        self._lock = threading.Lock()

    @property
    def lam(self) -> float:
        return self.design.lam

    @property
    def n_rows(self) -> int:
        return self.design.N

    def _key(self, conditioning):
        cond = frozenset(self.ts.index(c) for c in conditioning) - {self.target}
        extra = cond - set(self.universe)
        if extra:
            raise InputError(f"variables {sorted(extra)} are outside the conditioning universe")
        return cond

    def error(self, conditioning) -> PredictionError:
        """Prediction error given the past of ``conditioning`` plus the target's past."""
        key = self._key(conditioning)
        hit = self._errors.get(key)
        if hit is None:
            hit = self.design.epsilon(key | self._own)
            # duplicated work under contention is harmless: results are deterministic
            with self._lock:
                self._errors[key] = hit
        return hit

    def epsilon(self, conditioning) -> float:
        return self.error(conditioning).epsilon

    def n_features(self, conditioning) -> int:
        return self.design.n_features(self._key(conditioning) | self._own)

    def unnormalized(self, drivers, conditioning=None) -> float:
        """``eps(target | X minus drivers) - eps(target | X)``."""
        X = set(self.universe if conditioning is None else self._key(conditioning))
        B = set(self._key(drivers))
        return self.epsilon(X - B) - self.epsilon(X)


def _drivers(ts, target, drivers):
    B = tuple(sorted({ts.index(b) for b in drivers}))
    if not B:
        raise InputError("the driver set must be nonempty")
    if target in B:
        raise InputError("the target cannot be one of its drivers")
    return B


def _measure(cache: ErrorCache, kind, drivers, conditioning) -> CausalityValue:
    X = tuple(sorted(set(conditioning)))
    B = tuple(drivers)
    if not set(B) <= set(X):
        raise InputError("drivers must belong to the conditioning set")
    reduced = [x for x in X if x not in B]
    eps_r = cache.epsilon(reduced)
    eps_f = cache.epsilon(X)
    if kind == "unnormalized-set":
        value = eps_r - eps_f
    else:
        value = math.log(eps_r / eps_f)
    n_full = cache.n_features(X)
    return CausalityValue(
        kind=kind,
        value=value,
        target=cache.target,
        drivers=B,
        conditioning=X,
        spec=cache.spec,
        eps_reduced=eps_r,
        eps_full=eps_f,
        n_rows=cache.n_rows,
        n_full=n_full,
        n_removed=n_full - cache.n_features(reduced),
        lam=cache.lam,
    )


def pairwise_gc(ts: TimeSeriesSet, target, driver, spec: ModelSpec, cache=None) -> CausalityValue:
    """Bivariate GC: ``log eps(a | X_a) / eps(a | X_a, X_b)``."""
    a, b = ts.index(target), ts.index(driver)
    if a == b:
        raise InputError("target and driver must differ")
    if cache is None:
        cache = ErrorCache(ts, a, spec, universe=(b,))
    return _measure(cache, "pairwise", (b,), (b,))


def set_gc(ts: TimeSeriesSet, target, drivers, spec: ModelSpec, cache=None) -> CausalityValue:
    """Log-ratio GC of a driver set, conditioned on every other variable."""
    a = ts.index(target)
    B = _drivers(ts, a, drivers)
    if cache is None:
        cache = ErrorCache(ts, a, spec)
    return _measure(cache, "set", B, cache.universe)


def conditioned_gc(ts: TimeSeriesSet, target, driver, spec: ModelSpec, cache=None) -> CausalityValue:
    """Fully conditioned GC of one driver; the singleton case of :func:`set_gc`."""
    a, b = ts.index(target), ts.index(driver)
    if a == b:
        raise InputError("target and driver must differ")
    return replace(set_gc(ts, a, (b,), spec, cache), kind="conditioned")


def unnormalized_gc(ts: TimeSeriesSet, target, drivers, spec: ModelSpec, conditioning=None, cache=None) -> CausalityValue:
    """Variance reduction ``eps(a | X minus B) - eps(a | X)``.

    ``conditioning`` defaults to all variables other than the target.
    """
    a = ts.index(target)
    B = _drivers(ts, a, drivers)
    if cache is None:
        cache = ErrorCache(ts, a, spec, universe=conditioning)
    X = cache.universe if conditioning is None else tuple(sorted({ts.index(c) for c in conditioning} - {a}))
    return _measure(cache, "unnormalized-set", B, X)


def _recompute(value: CausalityValue, ts: TimeSeriesSet) -> CausalityValue:
    universe = value.drivers if value.kind == "pairwise" else value.conditioning
    cache = ErrorCache(ts, value.target, value.spec, universe=universe, lam=value.lam)
    return _measure(cache, value.kind, value.drivers, value.conditioning)


def _robust_wald(value: CausalityValue, ts: TimeSeriesSet) -> float:
    """HC3 Wald test that the removed feature coefficients are zero."""
    if value.spec.kernel == "gaussian" or value.lam > 0:
        raise ConfigError("the robust test needs an unregularized linear or polynomial model")
    universe = value.drivers if value.kind == "pairwise" else value.conditioning
    cache = ErrorCache(ts, value.target, value.spec, universe=universe, lam=0.0)
    design = cache.design
    full = set(value.conditioning) | {cache.target}
    cols = design.feature_columns(full)
    kept = set(design.feature_columns(full - set(value.drivers)))
    X = np.column_stack([np.ones(design.N), design.Fs[:, cols]])
    XtX_inv = np.linalg.pinv(X.T @ X)
    beta = XtX_inv @ (X.T @ design.yc)
    resid = design.yc - X @ beta
    lev = np.einsum("ij,jk,ik->i", X, XtX_inv, X)
    u = resid / np.clip(1.0 - lev, 1e-12, None)
    V = XtX_inv @ ((X * u[:, None] ** 2).T @ X) @ XtX_inv
    idx = [k + 1 for k, c in enumerate(cols) if c not in kept]
    b = beta[idx]
    W = float(b @ np.linalg.lstsq(V[np.ix_(idx, idx)], b, rcond=None)[0])
    return float(stats.chi2.sf(W, len(idx)))


def gc_significance(
    value: CausalityValue,
    ts: TimeSeriesSet,
    method: str = "analytic",
    n_surrogates: int = 100,
    seed: int = 0,
) -> float:
    """One-sided p-value of a causality measurement.

    ``method='analytic'`` uses the F-test of the two nested models
    (numerator dof = removed feature columns, denominator dof = rows minus
    full-model columns minus one). ``method='surrogate'`` recomputes the
    measure with the drivers' raw series circularly shifted (one common
    random shift of at least ``m + 10`` samples per surrogate).
    ``method='robust'`` is a Wald test with HC3 heteroscedasticity-consistent
    covariance; use it when the driver modulates the target's noise level
    (multiplicative couplings), which inflates the F-test's rejection rate.
    """
    if value.n_removed == 0:
        return 1.0
    if method == "analytic":
        if value.spec.kernel == "gaussian":
            raise ConfigError("analytic significance needs a linear or polynomial model; use surrogates")
        dof1 = value.n_removed
        dof2 = value.n_rows - value.n_full - 1
        if dof2 <= 0:
            raise InputError("not enough rows for the F-test")
        drop = max(value.eps_reduced - value.eps_full, 0.0)
        if value.eps_full <= 0:
            return 0.0 if drop > 0 else 1.0
        F = (drop / dof1) / (value.eps_full / dof2)
        return float(stats.f.sf(F, dof1, dof2))
    if method == "robust":
        return _robust_wald(value, ts)
    if method != "surrogate":
        raise ConfigError(f"unknown significance method {method!r}")
    if n_surrogates < MIN_SURROGATES:
        raise TooFewSurrogates(f"{n_surrogates} surrogates requested; at least {MIN_SURROGATES} needed")
    lo = value.spec.m + SHIFT_MARGIN
    hi = ts.T - lo
    if hi <= lo:
        raise InputError("series too short for circular-shift surrogates")
    rng = np.random.default_rng(seed)
    exceed = 0
    for shift in rng.integers(lo, hi + 1, size=n_surrogates):
        surrogate = ts
        for b in value.drivers:
            surrogate = surrogate.replace_column(b, np.roll(ts.values[:, b], int(shift)))
        if _recompute(value, surrogate).value >= value.value:
            exceed += 1
    return (1 + exceed) / (1 + n_surrogates)
