"""Time-series containers, standardization and lagged regression datasets."""

from __future__ import annotations

import csv
import io
import sys
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .exceptions import InputError, InsufficientSamples, UnknownLabel, ZeroVarianceColumn

# Block key used for an external target series (e.g. a principal component).
TARGET_BLOCK = -1

# Rows that must remain beyond the number of predictor columns.
MIN_MARGIN = 5


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeSeriesSet:
    """A ``T x n`` multivariate record with one label per column.

    Parameters
    ----------
    values : array_like, shape (T, n)
        Samples in time order.
    labels : sequence of str, optional
        Column names; defaults to ``x1 .. xn``.
    meta : mapping, optional
        Free-form provenance (generator parameters, standardization flag).
    """

    values: np.ndarray
    labels: tuple = ()
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2:
            raise InputError(f"expected a 2-d array, got shape {values.shape}")
        if values.shape[1] < 2:
            raise InputError("at least two variables are required")
        if not np.all(np.isfinite(values)):
            raise InputError("time series contain NaN or Inf")
        labels = tuple(self.labels) or tuple(f"x{k + 1}" for k in range(values.shape[1]))
        labels = tuple(str(s) for s in labels)
        if len(labels) != values.shape[1]:
            raise InputError(f"{len(labels)} labels for {values.shape[1]} columns")
        if len(set(labels)) != len(labels):
            raise InputError("labels must be unique")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def index(self, label) -> int:
        if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
            if 0 <= label < self.n:
                return int(label)
            raise UnknownLabel(label)
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise UnknownLabel(label) from None

    def column(self, k) -> np.ndarray:
        return self.values[:, self.index(k)]

    def with_columns(self, values, labels, **meta) -> "TimeSeriesSet":
        """Return a new set with extra columns appended."""
        values = np.asarray(values, dtype=float).reshape(self.T, -1)
        return TimeSeriesSet(
            np.hstack([self.values, values]),
            self.labels + tuple(labels),
            {**self.meta, **meta},
        )

    def replace_column(self, k, series) -> "TimeSeriesSet":
        values = np.array(self.values)
        values[:, self.index(k)] = series
        return TimeSeriesSet(values, self.labels, self.meta)

    def subset(self, columns) -> "TimeSeriesSet":
        idx = [self.index(c) for c in columns]
        return TimeSeriesSet(self.values[:, idx], [self.labels[i] for i in idx], self.meta)


def standardize(ts: TimeSeriesSet) -> TimeSeriesSet:
    """Rescale every column to zero mean and unit (unbiased) variance."""
    if ts.T < 2:
        raise InputError("standardization needs at least two samples")
    mean = ts.values.mean(axis=0)
    std = ts.values.std(axis=0, ddof=1)
    scale = np.maximum(np.abs(ts.values).max(axis=0), 1.0)
    for k, s in enumerate(std):
        if not s > 1e-12 * scale[k]:
            raise ZeroVarianceColumn(ts.labels[k])
    return TimeSeriesSet((ts.values - mean) / std, ts.labels, {**ts.meta, "standardized": True})


@dataclass(frozen=True)
class EmbeddingDataset:
    """Lagged predictors aligned with a one-step-ahead response.

    ``block_index`` maps each variable index (or :data:`TARGET_BLOCK` for an
    external target series) to its column slice in ``predictors``. Within a
    block the columns are ordered ``t-m, ..., t-1``.
    """

    predictors: np.ndarray
    response: np.ndarray
    block_index: Mapping
    target: object
    m: int

    @property
    def blocks(self) -> tuple:
        return tuple(self.block_index)

    def drop_blocks(self, blocks) -> "EmbeddingDataset":
        """Remove whole lagged blocks; the target's own past cannot be removed."""
        drop = set(blocks)
        own = self.target if isinstance(self.target, (int, np.integer)) else TARGET_BLOCK
        if own in drop:
            raise InputError("the target's own past cannot be removed")
        keep, index, start = [], {}, 0
        for b, sl in self.block_index.items():
            if b in drop:
                continue
            keep.append(self.predictors[:, sl])
            index[b] = slice(start, start + self.m)
            start += self.m
        return EmbeddingDataset(np.hstack(keep), self.response, MappingProxyType(index), self.target, self.m)


def lagged_block(x: np.ndarray, m: int) -> np.ndarray:
    """Rows ``(x[t-m], ..., x[t-1])`` for ``t = m .. T-1``."""
    T = len(x)
    return np.column_stack([x[k : T - m + k] for k in range(m)])


def build_embedding(ts: TimeSeriesSet, m: int, target, conditioning=None, target_past: bool = True) -> EmbeddingDataset:
    """Build the lagged regression problem for one target.

    Parameters
    ----------
    ts : TimeSeriesSet
    m : int
        Model order (number of lags per variable).
    target : int, str or array_like
        A column of ``ts`` or an external series of length ``T`` (its own lags
        then form the target-past block).
    conditioning : iterable, optional
        Variables whose past enters the predictors; defaults to all columns.
        The target's own past is always included for a column target.
    target_past : bool
        For an external target series, whether its own lags are predictors.
        Leave them out when the series is a linear combination of the
        columns, since its lags would then duplicate their lags.
    """
    if m < 1:
        raise InputError("model order must be >= 1")
    if ts.T <= m + 2:
        raise InsufficientSamples(f"T={ts.T} too short for order m={m}")
    if conditioning is None:
        conditioning = range(ts.n)
    Z = sorted({ts.index(c) for c in conditioning})
    if isinstance(target, (int, np.integer, str)) and not isinstance(target, bool):
        tgt = ts.index(target)
        series = ts.values[:, tgt]
        blocks = sorted(set(Z) | {tgt})
        sources = {b: ts.values[:, b] for b in blocks}
    else:
        series = np.asarray(target, dtype=float)
        if series.shape != (ts.T,):
            raise InputError(f"target series must have shape ({ts.T},)")
        tgt = TARGET_BLOCK
        blocks = ([TARGET_BLOCK] if target_past else []) + Z
        sources = {TARGET_BLOCK: series, **{b: ts.values[:, b] for b in Z}}
        if not blocks:
            raise InputError("no predictors: empty conditioning and no target past")
    ncols = len(blocks) * m
    if ts.T - m < ncols + MIN_MARGIN:
        raise InsufficientSamples(
            f"{ts.T - m} usable rows for {ncols} predictor columns (margin {MIN_MARGIN})"
        )
    cols, index = [], {}
    for k, b in enumerate(blocks):
        cols.append(lagged_block(sources[b], m))
        index[b] = slice(k * m, (k + 1) * m)
    predictors = np.hstack(cols)
    predictors.setflags(write=False)
    response = np.array(series[m:])
    response.setflags(write=False)
    return EmbeddingDataset(predictors, response, MappingProxyType(index), tgt, m)


def read_csv(path_or_buffer) -> TimeSeriesSet:
    """Read the header-plus-rows CSV format; lines starting with ``#`` are skipped."""
    if isinstance(path_or_buffer, (str, Path)):
        text = Path(path_or_buffer).read_text(encoding="utf-8")
    else:
        text = path_or_buffer.read()
    rows = [r for r in csv.reader(line for line in io.StringIO(text) if not line.startswith("#")) if r]
    if len(rows) < 2:
        raise InputError("CSV needs a header and at least one data row")
    header = [h.strip() for h in rows[0]]
    try:
        values = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise InputError(f"non-numeric CSV entry: {exc}") from None
    if values.shape[1] != len(header):
        raise InputError("ragged CSV rows")
    return TimeSeriesSet(values, header)


def write_csv(ts: TimeSeriesSet, path, comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ts.labels)
        for row in ts.values:
            w.writerow([repr(float(v)) for v in row])


def as_timeseries(X, labels: Sequence[str] | None = None) -> TimeSeriesSet:
    if isinstance(X, TimeSeriesSet):
        return X
    pd = sys.modules.get("pandas")
    if pd is not None and isinstance(X, pd.DataFrame):
        return TimeSeriesSet(X.to_numpy(dtype=float), [str(c) for c in X.columns])
    return TimeSeriesSet(np.asarray(X, dtype=float), labels or ())
