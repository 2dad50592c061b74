"""scikit-learn style wrappers around the functional API.

The estimators take a ``(T, n)`` array or DataFrame of time series and keep
their results in trailing-underscore attributes. Hyperparameters are plain
constructor arguments so ``get_params``/``set_params``/``clone`` work.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import causality, partition, synergy
from .data import EmbeddingDataset, TimeSeriesSet, standardize
from .network import best_cut, dendrogram
from .regression import FittedModel, ModelSpec, NestedDesign

__all__ = [
    "AutoregressivePredictor",
    "GrangerCausality",
    "RedundancyPartition",
    "SynergyNetwork",
    "ComponentTargets",
]


def _validated_series(X, min_samples=3) -> TimeSeriesSet:
    """Check ``X`` and wrap it in a :class:`TimeSeriesSet`, keeping column names."""
    if isinstance(X, TimeSeriesSet):
        return X
    columns = getattr(X, "columns", None)
    arr = check_array(X, dtype=np.float64, ensure_all_finite=True, ensure_min_samples=min_samples, ensure_min_features=2)
    labels = [str(c) for c in columns] if columns is not None else ()
    return TimeSeriesSet(arr, labels)


class _SpecMixin:
    """Builds a :class:`ModelSpec` from the estimator's hyperparameters."""

    def _spec(self) -> ModelSpec:
        return ModelSpec(
            m=self.m,
            kernel=self.kernel,
            degree=self.degree,
            width=self.width,
            regularization=self.regularization,
            ridge_lambda=self.ridge_lambda,
        )


class AutoregressivePredictor(RegressorMixin, BaseEstimator):
    """Regression of a response on (already lagged) predictor columns.

    Parameters
    ----------
    kernel : {'linear', 'polynomial', 'gaussian'}
    degree : int
    width : float, optional
        Gaussian width; median heuristic when ``None``.
    regularization : {'none', 'ridge', 'ridge-gcv'}
    ridge_lambda : float

    Attributes
    ----------
    lambda_ : float
        Ridge parameter actually used.
    epsilon_ : float
        In-sample mean squared residual.
    """

    def __init__(self, kernel="linear", degree=2, width=None, regularization="none", ridge_lambda=0.0):
        self.kernel = kernel
        self.degree = degree
        self.width = width
        self.regularization = regularization
        self.ridge_lambda = ridge_lambda

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64, ensure_all_finite=True, ensure_min_samples=2)
        y = check_array(y, dtype=np.float64, ensure_all_finite=True, ensure_2d=False)
        if len(y) != len(X):
            raise ValueError("X and y have different numbers of rows")
        # the caller supplies lagged columns, so the order is irrelevant here
        spec = ModelSpec(kernel=self.kernel, degree=self.degree, width=self.width,
                         regularization=self.regularization, ridge_lambda=self.ridge_lambda)
        self.n_features_in_ = X.shape[1]
        data = EmbeddingDataset(X, y, {0: slice(0, X.shape[1])}, 0, 1)
        design = NestedDesign(data, spec)
        self.lambda_ = design.lam
        self.epsilon_ = design.epsilon().epsilon
        self.model_ = FittedModel.fit_arrays(X, y, spec, design.lam, design.width)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64, ensure_all_finite=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return self.model_.predict(X)


class GrangerCausality(_SpecMixin, BaseEstimator):
    """Matrix of Granger causalities between all pairs of variables.

    Parameters
    ----------
    kind : {'conditioned', 'pairwise'}
    significance : {None, 'analytic', 'robust', 'surrogate'}
    n_surrogates, seed : int
        Used by the surrogate test.

    Attributes
    ----------
    gc_ : ndarray of shape (n, n)
        ``gc_[a, b]`` is the causality from ``b`` to ``a``; the diagonal is 0.
    pvalues_ : ndarray or None
    labels_ : tuple of str
    """

    def __init__(self, m=1, kernel="linear", degree=2, width=None, regularization="none",
                 ridge_lambda=0.0, kind="conditioned", significance=None, n_surrogates=100,
                 seed=0, standardize=True):
        self.m = m
        self.kernel = kernel
        self.degree = degree
        self.width = width
        self.regularization = regularization
        self.ridge_lambda = ridge_lambda
        self.kind = kind
        self.significance = significance
        self.n_surrogates = n_surrogates
        self.seed = seed
        self.standardize = standardize

    def fit(self, X, y=None):
        ts = _validated_series(X)
        if self.standardize:
            ts = standardize(ts)
        if self.kind not in ("conditioned", "pairwise"):
            raise ValueError(f"unknown kind {self.kind!r}")
        spec = self._spec()
        n = ts.n
        gc = np.zeros((n, n))
        pv = np.ones((n, n)) if self.significance else None
        for a in range(n):
            cache = causality.ErrorCache(ts, a, spec) if self.kind == "conditioned" else None
            for b in range(n):
                if a == b:
                    continue
                if self.kind == "conditioned":
                    v = causality.conditioned_gc(ts, a, b, spec, cache=cache)
                else:
                    v = causality.pairwise_gc(ts, a, b, spec)
                gc[a, b] = v.value
                if pv is not None:
                    pv[a, b] = causality.gc_significance(v, ts, self.significance, self.n_surrogates, self.seed)
        self.gc_ = gc
        self.pvalues_ = pv
        self.labels_ = ts.labels
        return self


class RedundancyPartition(_SpecMixin, BaseEstimator):
    """Partition of the drivers of ``target`` that maximizes total causality.

    Attributes
    ----------
    partition_ : Partition
    blocks_ : list of list of str
    delta_ : float
    """

    def __init__(self, target=-1, m=1, kernel="linear", degree=2, width=None, regularization="none",
                 ridge_lambda=0.0, mode="auto", tie_rtol=partition.TIE_RTOL, merge_tol=partition.MERGE_TOL,
                 standardize=True):
        self.target = target
        self.m = m
        self.kernel = kernel
        self.degree = degree
        self.width = width
        self.regularization = regularization
        self.ridge_lambda = ridge_lambda
        self.mode = mode
        self.tie_rtol = tie_rtol
        self.merge_tol = merge_tol
        self.standardize = standardize

    def fit(self, X, y=None):
        ts = _validated_series(X)
        if self.standardize:
            ts = standardize(ts)
        target = self.target
        if isinstance(target, (int, np.integer)) and target < 0:
            target = ts.n + int(target)
        result = partition.best_partition(
            ts, target, self._spec(), mode=self.mode, tie_rtol=self.tie_rtol, merge_tol=self.merge_tol
        )
        self.partition_ = result
        self.blocks_ = result.labelled(ts.labels)
        self.delta_ = result.total
        self.labels_ = ts.labels
        return self


class SynergyNetwork(_SpecMixin, BaseEstimator):
    """Synergy matrix over principal-component targets and its network summary.

    Parameters
    ----------
    n_lambda : int or float
        Component count, or the fraction of variance to explain.
    target_past : bool
        Add each component's own lags to its models.

    Attributes
    ----------
    result_ : SynergyMatrix
    psi_, psi_r_, psi_s_ : ndarray of shape (n, n)
    strengths_r_, strengths_s_ : ndarray of shape (n,)
    dendrogram_ : Dendrogram
        Built on ``psi_r_``.
    communities_ : CommunityAssignment
    """

    def __init__(self, n_lambda=0.95, m=1, kernel="linear", degree=2, width=None,
                 regularization="ridge-gcv", ridge_lambda=0.0, n_jobs=None, standardize=True,
                 target_past=False):
        self.n_lambda = n_lambda
        self.target_past = target_past
        self.m = m
        self.kernel = kernel
        self.degree = degree
        self.width = width
        self.regularization = regularization
        self.ridge_lambda = ridge_lambda
        self.n_jobs = n_jobs
        self.standardize = standardize

    def fit(self, X, y=None):
        ts = _validated_series(X)
        if self.standardize:
            ts = standardize(ts)
        res = synergy.psi_matrix(ts, self.n_lambda, self._spec(), n_jobs=self.n_jobs, target_past=self.target_past)
        self.result_ = res
        self.psi_, self.psi_r_, self.psi_s_ = res.psi, res.psi_r, res.psi_s
        self.strengths_r_, self.strengths_s_ = res.strengths_r, res.strengths_s
        self.dendrogram_ = dendrogram(res.psi_r, ts.labels)
        self.communities_ = best_cut(self.dendrogram_, res.psi_r)
        self.labels_ = ts.labels
        return self


class ComponentTargets(TransformerMixin, BaseEstimator):
    """Principal-component time courses used as synergy targets.

    ``fit`` standardizes the columns and keeps the leading eigenvectors of
    their covariance; ``transform`` projects new rows with the fitted
    centering and scaling.

    Parameters
    ----------
    n_lambda : int or float
        Component count, or the fraction of variance to explain.
    """

    def __init__(self, n_lambda=0.95):
        self.n_lambda = n_lambda

    def fit(self, X, y=None):
        ts = _validated_series(X, min_samples=2)
        self.mean_ = ts.values.mean(axis=0)
        self.scale_ = ts.values.std(axis=0, ddof=1)
        pcs = synergy.pca_targets(standardize(ts), self.n_lambda)
        self.components_ = pcs.loadings.T
        self.explained_variance_ = pcs.eigenvalues
        self.explained_variance_ratio_ = pcs.explained
        self.n_components_ = pcs.k
        self.n_features_in_ = ts.n
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64, ensure_all_finite=True)
        return ((X - self.mean_) / self.scale_) @ self.components_.T

