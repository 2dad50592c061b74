"""Autoregressive prediction models and their mean squared prediction error.

Three model families are supported: linear least squares, the inhomogeneous
polynomial feature map (all monomials up to a degree) and Gaussian kernel
ridge regression. The intercept is always fitted and never penalized.

:class:`NestedDesign` is the workhorse used by the causality measures: it
builds the feature matrix of the full conditioning model once, fixes the
ridge parameter on that model, and then evaluates the prediction error of
any sub-model obtained by removing whole lagged blocks.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from math import comb

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from .data import EmbeddingDataset
from .exceptions import ConfigError, FeatureExplosion, SingularDesign

KERNELS = ("linear", "polynomial", "gaussian")
REGULARIZATIONS = ("none", "ridge", "ridge-gcv")

# Ridge grid searched by generalized cross-validation (0 is tried first).
GCV_GRID = np.concatenate([[0.0], np.logspace(-8, 2, 25)])
GCV_RTOL = 1e-4


@dataclass(frozen=True)
class ModelSpec:
    """Regression configuration.

    Parameters
    ----------
    m : int
        Model order (lags per variable).
    kernel : {'linear', 'polynomial', 'gaussian'}
    degree : int
        Polynomial degree, used when ``kernel='polynomial'``.
    width : float or None
        Gaussian kernel width; ``None`` selects the median pairwise distance
        of the full-model predictor rows.
    regularization : {'none', 'ridge', 'ridge-gcv'}
    ridge_lambda : float
        Penalty for ``regularization='ridge'``. The penalty term is
        ``ridge_lambda * N * ||beta||**2`` on unit-variance features.
    epsilon_mode : {'in-sample', 'cv'}
        In-sample residuals (default) or k-fold cross-validated error.
    cv_folds : int
    """

    m: int = 1
    kernel: str = "linear"
    degree: int = 2
    width: float | None = None
    regularization: str = "none"
    ridge_lambda: float = 0.0
    epsilon_mode: str = "in-sample"
    cv_folds: int = 5

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("model order m must be >= 1")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.kernel == "polynomial" and self.degree < 1:
            raise ConfigError("polynomial degree must be >= 1")
        if self.width is not None and not self.width > 0:
            raise ConfigError("gaussian width must be > 0")
        if self.regularization not in REGULARIZATIONS:
            raise ConfigError(f"unknown regularization {self.regularization!r}")
        if self.ridge_lambda < 0:
            raise ConfigError("ridge lambda must be >= 0")
        if self.kernel == "gaussian" and self.regularization == "none":
            raise ConfigError("the gaussian kernel interpolates without ridge; use 'ridge' or 'ridge-gcv'")
        if self.epsilon_mode not in ("in-sample", "cv"):
            raise ConfigError(f"unknown epsilon mode {self.epsilon_mode!r}")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")

    @classmethod
    def parse(cls, m=1, kernel="linear", regularization="none", **kw) -> "ModelSpec":
        """Build a spec from the compact strings used on the command line.

        ``kernel`` is ``linear``, ``poly:P`` / ``polynomial:P`` or
        ``gaussian`` / ``gaussian:WIDTH``; ``regularization`` is ``none``,
        ``ridge:LAMBDA`` or ``ridge-gcv``.
        """
        name, _, arg = str(kernel).partition(":")
        opts = dict(kw)
        if name in ("poly", "polynomial"):
            opts.update(kernel="polynomial", degree=int(arg or 2))
        elif name == "gaussian":
            opts.update(kernel="gaussian", width=float(arg) if arg else None)
        elif name == "linear":
            opts.update(kernel="linear")
        else:
            raise ConfigError(f"unknown kernel {kernel!r}")
        reg, _, lam = str(regularization).partition(":")
        if reg == "ridge" and lam:
            opts.update(regularization="ridge", ridge_lambda=float(lam))
        else:
            opts.update(regularization=reg)
        try:
            return cls(m=int(m), **opts)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @property
    def is_linear(self) -> bool:
        return self.kernel == "linear" or (self.kernel == "polynomial" and self.degree == 1)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PredictionError:
    """Mean squared residual of a fitted model.

    ``n_params`` is the effective number of fitted coefficients excluding the
    intercept (column count for least squares, hat-matrix trace for ridge).
    """

    epsilon: float
    n_params: float
    lambda_used: float


def monomials(d: int, p: int) -> list:
    """Column-index tuples of all monomials of total degree 1..p, graded lex."""
    out = []
    for deg in range(1, p + 1):
        out.extend(itertools.combinations_with_replacement(range(d), deg))
    return out


def polynomial_features(predictors, p: int) -> np.ndarray:
    """All monomials of total degree ``1..p`` of the input columns.

    Columns come in graded lexicographic order: the inputs themselves, then
    every degree-2 product ``x_i x_j`` with ``i <= j``, and so on. The
    constant is left out because the intercept is fitted separately.

    Raises
    ------
    FeatureExplosion
        If the number of monomials exceeds half the number of rows.
    """
    X = np.asarray(predictors, dtype=float)
    if p < 1:
        raise ConfigError("degree must be >= 1")
    rows, d = X.shape
    count = comb(d + p, p) - 1
    if count > rows / 2:
        raise FeatureExplosion(
            f"{count} monomials of degree <= {p} in {d} inputs exceed {rows} rows / 2; "
            "use the gaussian kernel instead"
        )
    if p == 1:
        return X.copy()
    return np.column_stack([np.prod(X[:, list(mono)], axis=1) for mono in monomials(d, p)])


def median_width(X) -> float:
    """Median pairwise Euclidean distance between rows (at most 2000 rows used)."""
    X = np.asarray(X, dtype=float)
    if len(X) > 2000:
        X = X[:: int(np.ceil(len(X) / 2000))]
    w = float(np.median(pdist(X)))
    return w if w > 0 else 1.0


def gaussian_gram(A, B, width: float) -> np.ndarray:
    return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * width * width))


def _gcv_scores(s2, Uty, y_norm2, N, rank_deficient, grid, extra_resid=0.0):
    # s2: eigenvalues of the (centered) Gram; Uty: projections of y on the eigvectors
    scores = []
    for lam in grid:
        if lam == 0 and rank_deficient:
            scores.append(np.inf)
            continue
        shrink = s2 / (s2 + lam * N) if lam > 0 else (s2 > 0).astype(float)
        rss = y_norm2 - np.sum((2 * shrink - shrink**2) * Uty**2) + extra_resid
        dof = np.sum(shrink) + 1.0
        if dof >= N:
            scores.append(np.inf)
            continue
        scores.append((max(rss, 0.0) / N) / (1.0 - dof / N) ** 2)
    return np.array(scores)


class NestedDesign:
    """Full-model features for one target, evaluated on nested sub-models.

    Parameters
    ----------
    data : EmbeddingDataset
        The full conditioning model.
    spec : ModelSpec
    lam : float, optional
        Ridge parameter to use for every sub-model; by default it comes from
        ``spec`` (and, for ``ridge-gcv``, is selected once on the full model).
    """

    def __init__(self, data: EmbeddingDataset, spec: ModelSpec, lam: float | None = None):
        self.data = data
        self.spec = spec
        self.N = len(data.response)
        self.blocks = tuple(data.block_index)
        y = np.asarray(data.response, dtype=float)
        self.y_mean = y.mean()
        self.yc = y - self.y_mean
        P = data.predictors
        col_block = np.empty(P.shape[1], dtype=int)
        for b, sl in data.block_index.items():
            col_block[sl] = b
        self._col_block = col_block
        if spec.kernel == "gaussian":
            self.width = spec.width if spec.width is not None else median_width(P)
            self._inputs = np.asarray(P, dtype=float)
        else:
            self.width = None
            degree = spec.degree if spec.kernel == "polynomial" else 1
            F = polynomial_features(P, degree)
            monos = monomials(P.shape[1], degree)
            self.feature_blocks = [frozenset(col_block[list(mono)]) for mono in monos]
            self.F_mean = F.mean(axis=0)
            Fc = F - self.F_mean
            scale = Fc.std(axis=0)
            self.F_scale = np.where(scale > 0, scale, 1.0)
            self.Fs = Fc / self.F_scale
            self._gram = None
        if lam is not None:
            self.lam = float(lam)
        elif spec.regularization == "none":
            self.lam = 0.0
        elif spec.regularization == "ridge":
            self.lam = float(spec.ridge_lambda)
        else:
            self.lam = self.select_lambda()
        if self.lam < 0:
            raise ConfigError("ridge lambda must be >= 0")
        if spec.kernel == "gaussian" and self.lam == 0:
            raise ConfigError("gaussian kernel requires a positive ridge parameter")

    # -- column bookkeeping -------------------------------------------------

    def feature_columns(self, kept) -> np.ndarray:
        kept = frozenset(kept)
        return np.array([k for k, fb in enumerate(self.feature_blocks) if fb <= kept], dtype=int)

    def input_columns(self, kept) -> np.ndarray:
        return np.flatnonzero(np.isin(self._col_block, list(kept)))

    @property
    def gram(self):
        if self._gram is None:
            self._gram = (self.Fs.T @ self.Fs, self.Fs.T @ self.yc)
        return self._gram

    # -- regularization ------------------------------------------------------

    def select_lambda(self) -> float:
        """Generalized cross-validation over :data:`GCV_GRID` on the full model."""
        N = self.N
        if self.spec.kernel == "gaussian":
            Kc = self._centered_kernel(self._inputs, self._inputs)
            e, V = np.linalg.eigh(Kc)
            e = np.clip(e, 0, None)
            Vty = V.T @ self.yc
            scores = _gcv_scores(e, Vty, self.yc @ self.yc, N, True, GCV_GRID)
        else:
            U, s, _ = np.linalg.svd(self.Fs, full_matrices=False)
            tol = s.max(initial=0.0) * max(self.Fs.shape) * np.finfo(float).eps
            rank_def = np.sum(s > tol) < self.Fs.shape[1]
            Uty = U.T @ self.yc
            resid_out = self.yc @ self.yc - Uty @ Uty
            scores = _gcv_scores(s**2, Uty, Uty @ Uty, N, rank_def, GCV_GRID, extra_resid=resid_out)
        # smallest penalty whose score is within GCV_RTOL of the best one
        best = np.min(scores)
        return float(GCV_GRID[int(np.flatnonzero(scores <= best * (1 + GCV_RTOL))[0])])

    # -- fitting ---------------------------------------------------------------

    def _centered_kernel(self, A, B):
        K = gaussian_gram(A, B, self.width)
        return K - K.mean(axis=0) - K.mean(axis=1, keepdims=True) + K.mean()

    def _solve_features(self, Fs, yc, lam):
        if lam == 0:
            beta, _, rank, _ = np.linalg.lstsq(Fs, yc, rcond=None)
            if rank < Fs.shape[1]:
                raise SingularDesign(
                    f"design has rank {rank} < {Fs.shape[1]} columns; use ridge regularization"
                )
            return beta, float(Fs.shape[1])
        G = Fs.T @ Fs
        A = G + lam * len(yc) * np.eye(G.shape[0])
        beta = linalg.solve(A, Fs.T @ yc, assume_a="pos")
        ev = np.linalg.eigvalsh(G)
        return beta, float(np.sum(ev / (ev + lam * len(yc))))

    def _insample_features(self, cols):
        N = self.N
        if len(cols) == 0:
            return float(self.yc @ self.yc / N), 0.0
        Fs = self.Fs[:, cols]
        if self.lam == 0:
            beta, dof = self._solve_features(Fs, self.yc, 0.0)
        else:
            G, b = self.gram
            Gs = G[np.ix_(cols, cols)]
            beta = linalg.solve(Gs + self.lam * N * np.eye(len(cols)), b[cols], assume_a="pos")
            ev = np.linalg.eigvalsh(Gs)
            dof = float(np.sum(ev / (ev + self.lam * N)))
        r = self.yc - Fs @ beta
        return float(r @ r / N), dof

    def _insample_kernel(self, cols):
        N = self.N
        if len(cols) == 0:
            return float(self.yc @ self.yc / N), 0.0
        X = self._inputs[:, cols]
        Kc = self._centered_kernel(X, X)
        A = Kc + self.lam * N * np.eye(N)
        alpha = linalg.solve(A, self.yc, assume_a="pos")
        r = self.yc - Kc @ alpha
        e = np.clip(np.linalg.eigvalsh(Kc), 0, None)
        return float(r @ r / N), float(np.sum(e / (e + self.lam * N)))

    def _folds(self):
        k = self.spec.cv_folds
        edges = np.linspace(0, self.N, k + 1).astype(int)
        return [np.arange(edges[i], edges[i + 1]) for i in range(k)]

    def _cv(self, cols):
        y = np.asarray(self.data.response, dtype=float)
        sq = 0.0
        for test in self._folds():
            train = np.setdiff1d(np.arange(self.N), test)
            model = FittedModel.fit_arrays(self._raw_inputs(cols, train), y[train], self.spec, self.lam, self.width)
            pred = model.predict(self._raw_inputs(cols, test))
            sq += float(np.sum((y[test] - pred) ** 2))
        return sq / self.N

    def _raw_inputs(self, cols, rows):
        P = np.asarray(self.data.predictors, dtype=float)
        return P[np.ix_(rows, cols)]

    def epsilon(self, kept=None) -> PredictionError:
        """Prediction error of the sub-model using only the blocks in ``kept``."""
        kept = self.blocks if kept is None else tuple(kept)
        if self.spec.epsilon_mode == "cv":
            cols = self.input_columns(kept)
            eps = self._cv(cols)
            dof = float(len(cols))
        elif self.spec.kernel == "gaussian":
            eps, dof = self._insample_kernel(self.input_columns(kept))
        else:
            eps, dof = self._insample_features(self.feature_columns(kept))
        return PredictionError(max(eps, 0.0), dof, self.lam)

    def n_features(self, kept=None) -> int:
        kept = self.blocks if kept is None else tuple(kept)
        if self.spec.kernel == "gaussian":
            return len(self.input_columns(kept))
        return len(self.feature_columns(kept))


class FittedModel:
    """A fitted predictor usable on new rows (feature or kernel form)."""

    def __init__(self, spec, lam, width, intercept, coef, x_mean=None, x_scale=None, train=None):
        self.spec, self.lam, self.width = spec, lam, width
        self.intercept, self.coef = intercept, coef
        self.x_mean, self.x_scale, self.train = x_mean, x_scale, train

    @classmethod
    def fit_arrays(cls, X, y, spec: ModelSpec, lam: float, width: float | None = None) -> "FittedModel":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        y_mean = y.mean()
        if spec.kernel == "gaussian":
            w = width if width is not None else (spec.width or median_width(X))
            K = gaussian_gram(X, X, w)
            col_mean = K.mean(axis=0)
            Kc = K - col_mean - K.mean(axis=1, keepdims=True) + K.mean()
            alpha = linalg.solve(Kc + lam * len(y) * np.eye(len(y)), y - y_mean, assume_a="pos")
            return cls(spec, lam, w, y_mean, alpha, train=(X, col_mean, K.mean()))
        degree = spec.degree if spec.kernel == "polynomial" else 1
        F = polynomial_features(X, degree) if X.shape[1] else np.empty((len(y), 0))
        mean = F.mean(axis=0)
        scale = (F - mean).std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        Fs = (F - mean) / scale
        if Fs.shape[1] == 0:
            beta = np.empty(0)
        elif lam == 0:
            beta, _, rank, _ = np.linalg.lstsq(Fs, y - y_mean, rcond=None)
            if rank < Fs.shape[1]:
                raise SingularDesign("rank-deficient design; use ridge regularization")
        else:
            beta = linalg.solve(Fs.T @ Fs + lam * len(y) * np.eye(Fs.shape[1]), Fs.T @ (y - y_mean), assume_a="pos")
        return cls(spec, lam, None, y_mean, beta, mean, scale)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.spec.kernel == "gaussian":
            Xtr, col_mean, grand = self.train
            K = gaussian_gram(X, Xtr, self.width)
            # center the test kernel with the training statistics
            Kc = K - K.mean(axis=1, keepdims=True) - col_mean + grand
            return self.intercept + Kc @ self.coef
        degree = self.spec.degree if self.spec.kernel == "polynomial" else 1
        if len(self.coef) == 0:
            return np.full(len(X), self.intercept)
        F = polynomial_features(X, degree) if degree > 1 else X
        return self.intercept + ((F - self.x_mean) / self.x_scale) @ self.coef


def select_regularization(data: EmbeddingDataset, spec: ModelSpec) -> float:
    """Ridge parameter minimizing the GCV score on ``data`` (full model)."""
    if spec.regularization != "ridge-gcv":
        spec = ModelSpec(**{**spec.to_dict(), "regularization": "ridge-gcv"})
    return NestedDesign(data, spec).lam


def fit_prediction_error(data: EmbeddingDataset, spec: ModelSpec, lam: float | None = None) -> PredictionError:
    """Fit the model on all predictor blocks and return its prediction error."""
    return NestedDesign(data, spec, lam=lam).epsilon()
