"""Pairwise synergy index, its cumulant expansion and the synergy network.

For a target ``a`` and conditioning set ``X`` the index of drivers ``i, j``
is::

    psi(i, j) = du_X({i, j}) - du_X(i) - du_X(j)
              = du_{X minus j}(i) - du_X(i)

with ``du`` the unnormalized causality. Positive values mean redundancy,
negative values synergy. Summing ``psi`` over principal-component targets
gives the target-free matrix ``Psi``.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .causality import ErrorCache
from .data import TimeSeriesSet
from .exceptions import AsymmetricInput, ConfigError, InputError, SubsetTooLarge, TooFewSurrogates
from .regression import ModelSpec

MAX_CUMULANT_ORDER = 5
FORM_ATOL = 1e-10

DEFAULT_PSI_SPEC = ModelSpec(regularization="ridge-gcv")


def max_threads() -> int:
    """Worker cap from ``SYNFLOW_THREADS`` (defaults to the CPU count)."""
    cpus = os.cpu_count() or 1
    try:
        cap = int(os.environ.get("SYNFLOW_THREADS", cpus))
    except ValueError:
        cap = cpus
    return max(1, min(cap, cpus))


@dataclass(frozen=True)
class PsiValue:
    i: int
    j: int
    target: object
    psi: float


def _psi_from_cache(cache: ErrorCache, i: int, j: int, conditioning=None, verify=False) -> float:
    i, j = min(i, j), max(i, j)
    X = set(cache.universe if conditioning is None else conditioning)
    e = cache.epsilon(X)
    e_i = cache.epsilon(X - {i})
    e_j = cache.epsilon(X - {j})
    e_ij = cache.epsilon(X - {i, j})
    psi = (e_ij - e) - (e_i - e) - (e_j - e)
    if verify:
        first = (e_ij - e_j) - (e_i - e)
        if not math.isclose(first, psi, rel_tol=0.0, abs_tol=FORM_ATOL):
            raise ArithmeticError(f"the two forms of psi disagree: {first!r} vs {psi!r}")
    return psi


def psi_pair(
    ts: TimeSeriesSet,
    target,
    i,
    j,
    spec: ModelSpec,
    conditioning=None,
    cache: ErrorCache | None = None,
    verify: bool = False,
) -> PsiValue:
    """Synergy index of drivers ``i`` and ``j`` for ``target``.

    The symmetric (three-term) form is returned; with ``verify=True`` the
    other form is evaluated too and must agree to ``1e-10``.
    """
    a = ts.index(target)
    i, j = ts.index(i), ts.index(j)
    if i == j:
        raise InputError("psi needs two distinct drivers")
    if a in (i, j):
        raise InputError("the target cannot be a driver")
    if cache is None:
        cache = ErrorCache(ts, a, spec, universe=conditioning)
    X = None if conditioning is None else {ts.index(c) for c in conditioning} - {a}
    if X is not None and not {i, j} <= X:
        raise InputError("both drivers must be in the conditioning set")
    return PsiValue(min(i, j), max(i, j), a, _psi_from_cache(cache, i, j, X, verify))


def _du_within(cache: ErrorCache, B: frozenset, gamma) -> float:
    # unnormalized causality of gamma when the conditioning is exactly B
    return cache.epsilon(B - set(gamma)) - cache.epsilon(B)


def cumulant(ts: TimeSeriesSet, target, B, spec: ModelSpec, cache: ErrorCache | None = None) -> float:
    """Cumulant ``S(B)`` of the prediction-error expansion.

    Every inner term conditions on ``B`` (plus the target's past)::

        S(B) = sum over nonempty G in B of (-1)**(|G| + 1) * du_B(G)

    so that the cumulants of all subsets of ``B`` add up to ``du_B(B)``.
    The first cumulant is ``du_i(i)``; odd orders match the alternating
    sums written out term by term, and the second cumulant is ``-psi`` with
    conditioning restricted to the pair.
    """
    a = ts.index(target)
    B = frozenset(ts.index(b) for b in B)
    if not B:
        raise InputError("the cumulant of the empty set is zero by definition")
    if a in B:
        raise InputError("the target cannot be in B")
    if len(B) > MAX_CUMULANT_ORDER:
        raise SubsetTooLarge(f"|B| = {len(B)} exceeds {MAX_CUMULANT_ORDER}")
    if cache is None:
        cache = ErrorCache(ts, a, spec)
    total = 0.0
    for r in range(1, len(B) + 1):
        sign = 1.0 if r % 2 else -1.0
        for gamma in itertools.combinations(sorted(B), r):
            total += sign * _du_within(cache, B, gamma)
    return total


@dataclass
class CumulantTable:
    """Cumulants of every nonempty subset of some drivers for one target."""

    target: int
    entries: dict = field(default_factory=dict)
    reductions: dict = field(default_factory=dict)

    def expansion_error(self) -> float:
        """Largest ``|sum of S over subsets of B - du_B(B)|`` over the table."""
        worst = 0.0
        for B, du in self.reductions.items():
            total = sum(S for G, S in self.entries.items() if G <= B)
            worst = max(worst, abs(total - du))
        return worst


def cumulant_table(ts: TimeSeriesSet, target, spec: ModelSpec, drivers=None, max_order=None) -> CumulantTable:
    a = ts.index(target)
    drivers = [d for d in range(ts.n) if d != a] if drivers is None else [ts.index(d) for d in drivers]
    max_order = min(len(drivers), max_order or MAX_CUMULANT_ORDER)
    cache = ErrorCache(ts, a, spec)
    table = CumulantTable(a)
    for r in range(1, max_order + 1):
        for B in itertools.combinations(drivers, r):
            B = frozenset(B)
            table.entries[B] = cumulant(ts, a, B, spec, cache=cache)
            table.reductions[B] = _du_within(cache, B, B)
    return table


# --- principal-component targets -------------------------------------------------


@dataclass(frozen=True)
class PrincipalTargets:
    components: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray
    explained: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[1]


def pca_targets(ts: TimeSeriesSet, n_lambda=0.95) -> PrincipalTargets:
    """Time courses of the leading principal components.

    ``n_lambda`` is a component count (int) or a fraction of explained
    variance in ``(0, 1]`` (float). Each loading vector is signed so that its
    largest-magnitude entry is positive.
    """
    X = ts.values - ts.values.mean(axis=0)
    evals, evecs = np.linalg.eigh(np.cov(X, rowvar=False))
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    pivot = np.argmax(np.abs(evecs), axis=0)
    evecs = evecs * np.sign(evecs[pivot, np.arange(evecs.shape[1])])
    ratio = evals / evals.sum()
    if isinstance(n_lambda, (int, np.integer)) and not isinstance(n_lambda, bool):
        if not 1 <= n_lambda <= ts.n:
            raise ConfigError(f"component count must be in 1..{ts.n}")
        k = int(n_lambda)
    else:
        f = float(n_lambda)
        if not 0 < f <= 1:
            raise ConfigError("variance fraction must be in (0, 1]")
        k = int(np.searchsorted(np.cumsum(ratio), f - 1e-12) + 1)
        k = min(k, ts.n)
    return PrincipalTargets(X @ evecs[:, :k], evecs[:, :k], evals[:k], ratio[:k])


# --- the synergy matrix --------------------------------------------------------------


def split_psi(psi):
    """Split into redundant and synergetic parts plus node strengths.

    Returns ``(psi_r, psi_s, strengths_r, strengths_s)`` with
    ``psi_r = max(psi, 0)`` and ``psi_s = max(-psi, 0)``.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
        raise AsymmetricInput("psi must be a square matrix")
    if np.max(np.abs(psi - psi.T), initial=0.0) > 1e-9:
        raise AsymmetricInput("psi is not symmetric")
    psi_r = np.maximum(psi, 0.0)
    psi_s = np.maximum(-psi, 0.0)
    return psi_r, psi_s, psi_r.sum(axis=1), psi_s.sum(axis=1)


@dataclass(frozen=True)
class SynergyMatrix:
    labels: tuple
    psi: np.ndarray
    psi_r: np.ndarray
    psi_s: np.ndarray
    strengths_r: np.ndarray
    strengths_s: np.ndarray
    n_lambda: int
    explained: np.ndarray | None = None
    per_component: np.ndarray | None = None
    lambdas: tuple = ()
    spec: ModelSpec | None = None
    target_past: bool = False

    @classmethod
    def from_psi(cls, labels, psi, **kw) -> "SynergyMatrix":
        psi_r, psi_s, sr, ss = split_psi(psi)
        return cls(tuple(labels), np.asarray(psi, dtype=float), psi_r, psi_s, sr, ss, **kw)

    def masked(self, pvalues, alpha: float = 0.05) -> "SynergyMatrix":
        """Copy with non-significant entries set to zero before splitting."""
        keep = np.asarray(pvalues) < alpha
        np.fill_diagonal(keep, False)
        return SynergyMatrix.from_psi(
            self.labels, np.where(keep, self.psi, 0.0),
            n_lambda=self.n_lambda, explained=self.explained, per_component=self.per_component,
            lambdas=self.lambdas, spec=self.spec, target_past=self.target_past,
        )

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "n_lambda": self.n_lambda,
            "explained_variance": None if self.explained is None else [float(v) for v in self.explained],
            "ridge_lambdas": [float(v) for v in self.lambdas],
            "component_past": self.target_past,
            "psi": self.psi.tolist(),
            "psi_r": self.psi_r.tolist(),
            "psi_s": self.psi_s.tolist(),
            "strengths_r": self.strengths_r.tolist(),
            "strengths_s": self.strengths_s.tolist(),
        }


def _check_psi_spec(spec: ModelSpec, target_past: bool):
    if target_past and spec.regularization == "none" and spec.kernel != "gaussian":
        # the lagged component is a linear combination of the lagged variables
        raise ConfigError(
            "component targets make the full design collinear; use regularization 'ridge' or 'ridge-gcv'"
        )


def _component_psi(ts, series, spec, lam=None, target_past=False):
    cache = ErrorCache(ts, series, spec, lam=lam, target_past=target_past)
    n = ts.n
    out = np.zeros((n, n))
    for i, j in itertools.combinations(range(n), 2):
        out[i, j] = out[j, i] = _psi_from_cache(cache, i, j)
    return out, cache.lam


def _pool_map(fn, items, n_jobs):
    workers = min(max_threads() if n_jobs is None else max(1, n_jobs), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def psi_matrix(
    ts: TimeSeriesSet,
    n_lambda=0.95,
    spec: ModelSpec | None = None,
    n_jobs: int | None = None,
    target_past: bool = False,
) -> SynergyMatrix:
    """Synergy matrix summed over principal-component targets.

    Each component time course is a target in turn and the lags of all
    original variables are the conditioning set. The diagonal is zero.

    Parameters
    ----------
    ts : TimeSeriesSet
    n_lambda : int or float
        Number of components, or the fraction of variance they must explain.
    spec : ModelSpec, optional
        Regression model; polynomial degree 2 with GCV ridge by default.
    n_jobs : int, optional
        Worker threads (one component per task).
    target_past : bool
        Add the component's own lags to every model. A component is a linear
        combination of the variables, so its lags let the model rebuild the
        lags of any single removed variable from the others: every
        single-variable reduction then vanishes up to the ridge penalty and
        ``Psi(i, j)`` collapses to the (nonnegative) joint reduction. Off by
        default; with it on, an unregularized polynomial model is singular
        and is rejected.
    """
    if ts.n < 3:
        raise InputError("the synergy matrix needs at least three variables")
    spec = DEFAULT_PSI_SPEC if spec is None else spec
    _check_psi_spec(spec, target_past)
    pcs = pca_targets(ts, n_lambda)
    results = _pool_map(
        lambda k: _component_psi(ts, pcs.components[:, k], spec, target_past=target_past), range(pcs.k), n_jobs
    )
    per = np.stack([r[0] for r in results])
    return SynergyMatrix.from_psi(
        ts.labels, per.sum(axis=0),
        n_lambda=pcs.k, explained=pcs.explained, per_component=per,
        lambdas=tuple(r[1] for r in results), spec=spec, target_past=target_past,
    )


def psi_pvalues(
    ts: TimeSeriesSet,
    result: SynergyMatrix,
    method: str = "analytic",
    n_surrogates: int = 100,
    seed: int = 0,
) -> np.ndarray:
    """p-values for the entries of a synergy matrix.

    ``analytic``: for each pair, the F-test for removing both drivers from the
    full model of each component target, Bonferroni-combined over
    components (tests that the pair contributes at all). ``surrogate``:
    two-sided test of ``|Psi(i, j)|`` against recomputations with the series
    of ``j`` circularly shifted (expensive: one full refit per pair and
    surrogate).
    """
    n = ts.n
    spec = result.spec or DEFAULT_PSI_SPEC
    pcs = pca_targets(ts, result.n_lambda)
    p = np.ones((n, n))
    if method == "analytic":
        if spec.kernel == "gaussian":
            raise ConfigError("analytic p-values need a linear or polynomial model")
        for k in range(pcs.k):
            cache = ErrorCache(ts, pcs.components[:, k], spec, lam=result.lambdas[k], target_past=result.target_past)
            X = set(cache.universe)
            e = cache.epsilon(X)
            n_full = cache.n_features(X)
            dof2 = cache.n_rows - n_full - 1
            for i, j in itertools.combinations(range(n), 2):
                e_ij = cache.epsilon(X - {i, j})
                q = n_full - cache.n_features(X - {i, j})
                F = (max(e_ij - e, 0.0) / q) / (e / dof2)
                pk = min(1.0, pcs.k * float(stats.f.sf(F, q, dof2)))
                p[i, j] = p[j, i] = min(p[i, j], pk)
        np.fill_diagonal(p, 1.0)
        return p
    if method != "surrogate":
        raise ConfigError(f"unknown significance method {method!r}")
    if n_surrogates < 20:
        raise TooFewSurrogates(f"{n_surrogates} surrogates requested; at least 20 needed")
    rng = np.random.default_rng(seed)
    lo = spec.m + 10
    shifts = rng.integers(lo, ts.T - lo + 1, size=(n, n_surrogates))
    exceed = np.zeros((n, n))
    for j in range(n):
        for shift in shifts[j]:
            shifted = ts.replace_column(j, np.roll(ts.values[:, j], int(shift)))
            surr = np.zeros(n)
            for k in range(pcs.k):
                cache = ErrorCache(shifted, pcs.components[:, k], spec, lam=result.lambdas[k], target_past=result.target_past)
                for i in range(n):
                    if i != j:
                        surr[i] += _psi_from_cache(cache, i, j)
            for i in range(n):
                if i != j and abs(surr[i]) >= abs(result.psi[i, j]):
                    exceed[min(i, j), max(i, j)] += 0.5
                    exceed[max(i, j), min(i, j)] += 0.5
    p = (1 + exceed) / (1 + n_surrogates)
    np.fill_diagonal(p, 1.0)
    return p
