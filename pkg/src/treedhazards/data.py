"""Survival data ingestion, time normalization and binning.

A dataset holds right-censored times, event indicators and a covariate
matrix.  Categorical covariates are stored as integer codes into a per-column
label tuple so that the whole covariate table is a single float array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import DataError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
DEFAULT_BINS = 100


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Right-censored survival responses with mixed covariates.

    Parameters
    ----------
    times : array_like
        Nonnegative observed times.
    status : array_like
        1 if the event was observed, 0 if the time is right censored.
    X : array_like, shape (n, p)
        Covariates.  Categorical columns hold integer codes into ``labels``.
    names : sequence of str
        Column names, length p.
    kinds : sequence of {"continuous", "categorical"}
    labels : sequence
        Per column, ``None`` for continuous columns or the tuple of label
        strings for categorical columns.
    time_name, status_name : str
        Header names used when writing the dataset back to CSV.
    """

    times: np.ndarray
    status: np.ndarray
    X: np.ndarray
    names: tuple
    kinds: tuple
    labels: tuple
    time_name: str = "time"
    status_name: str = "status"

    def __post_init__(self):
        times = _frozen(self.times, float)
        status = np.asarray(self.status)
        X = np.asarray(self.X, dtype=float)
        n = times.shape[0]
        if times.ndim != 1 or n < 1:
            raise DataError("times must be a nonempty vector")
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(n, 0)
        if X.ndim != 2 or X.shape[0] != n or status.shape != (n,):
            raise DataError("times, status and covariate rows must have identical length")
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            raise DataError("times must be finite and nonnegative")
        if not np.all(np.isin(status, (0, 1))):
            raise DataError("invalid status: values must be 0 or 1")
        p = X.shape[1]
        if not (len(self.names) == len(self.kinds) == len(self.labels) == p):
            raise DataError("names, kinds and labels must have one entry per covariate column")
        for j, (kind, labs) in enumerate(zip(self.kinds, self.labels)):
            col = X[:, j]
            if kind == CONTINUOUS:
                if labs is not None:
                    raise DataError(f"continuous column {self.names[j]!r} cannot carry labels")
                if not np.all(np.isfinite(col)):
                    raise DataError(f"column {self.names[j]!r} has missing or non-finite values")
            elif kind == CATEGORICAL:
                if not labs:
                    raise DataError(f"categorical column {self.names[j]!r} needs a label set")
                if np.any((col < 0) | (col >= len(labs)) | (col != np.floor(col))):
                    raise DataError(f"column {self.names[j]!r} has values outside its label set")
            else:
                raise DataError(f"unknown column kind {kind!r}")
        X.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "status", _frozen(status, np.int64))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "labels", tuple(None if l is None else tuple(l) for l in self.labels))

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def censoring_proportion(self) -> float:
        return float(1.0 - self.status.mean())

    def column_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown covariate {name!r}") from None

    def encode_rows(self, frame: pd.DataFrame) -> np.ndarray:
        """Encode raw covariate rows (by column name) into the float layout of ``X``."""
        out = np.empty((len(frame), self.p))
        for j, (name, kind, labs) in enumerate(zip(self.names, self.kinds, self.labels)):
            if name not in frame.columns:
                raise DataError(f"missing covariate column {name!r}")
            col = frame[name]
            if col.isna().any():
                raise DataError(f"column {name!r} has missing values")
            if kind == CONTINUOUS:
                vals = _numeric(col)
                if vals.isna().any():
                    raise DataError(f"column {name!r} must be numeric")
                out[:, j] = vals.to_numpy(float)
            else:
                lookup = {lab: code for code, lab in enumerate(labs)}
                keys = [_label_key(v) for v in col]
                bad = [k for k in keys if k not in lookup]
                if bad:
                    raise DataError(f"unknown label {bad[0]!r} for column {name!r}")
                out[:, j] = [lookup[k] for k in keys]
        return out

    def decode_column(self, j: int) -> list:
        if self.kinds[j] == CONTINUOUS:
            return self.X[:, j].tolist()
        labs = self.labels[j]
        return [labs[int(c)] for c in self.X[:, j]]

    def with_times(self, times) -> "SurvivalDataset":
        return SurvivalDataset(times, self.status, self.X, self.names, self.kinds, self.labels,
                               self.time_name, self.status_name)


@dataclass(frozen=True, eq=False)
class NormalizedDataset:
    """A dataset whose times were divided by ``time_scale`` (the largest raw time)."""

    dataset: SurvivalDataset
    time_scale: float

    @property
    def times(self):
        return self.dataset.times

    @property
    def status(self):
        return self.dataset.status

    @property
    def X(self):
        return self.dataset.X

    @property
    def n(self):
        return self.dataset.n

    def denormalize(self, t):
        return np.asarray(t, dtype=float) * self.time_scale


def normalize_times(d: SurvivalDataset) -> NormalizedDataset:
    scale = float(np.max(d.times))
    if not scale > 0:
        raise DataError("degenerate dataset: all times are zero")
    return NormalizedDataset(d.with_times(d.times / scale), scale)


@dataclass(frozen=True, eq=False)
class BinGrid:
    """Equal-width bins ``(s_{k-1}, s_k]`` covering [0, 1]."""

    K: int = DEFAULT_BINS
    endpoints: np.ndarray = field(init=False)
    midpoints: np.ndarray = field(init=False)

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise DataError("bin count K must be a positive integer")
        s = np.arange(self.K + 1) / self.K
        s[-1] = 1.0
        object.__setattr__(self, "endpoints", _frozen(s, float))
        object.__setattr__(self, "midpoints", _frozen(0.5 * (s[:-1] + s[1:]), float))

    @property
    def width(self) -> float:
        return 1.0 / self.K

    def locate(self, times) -> tuple[np.ndarray, np.ndarray]:
        """0-based bin of each time and its offset past the bin's left endpoint.

        A time equal to an endpoint ``s_k`` belongs to bin k (right-closed);
        time 0 is placed in the first bin.
        """
        t = np.asarray(times, dtype=float)
        if np.any(t < 0) or np.any(t > 1):
            raise DataError("binned times must lie in [0, 1]")
        b = np.searchsorted(self.endpoints, t, side="left") - 1
        b = np.clip(b, 0, self.K - 1)
        return b, t - self.endpoints[b]


@dataclass(frozen=True, eq=False)
class NodeStats:
    """Binned sufficient statistics of the observations reaching a node.

    ``counts`` and ``exposures`` span the full grid; the node's model only
    uses the active prefix ``[0, k_max)`` ending at the bin of its largest time.
    """

    counts: np.ndarray
    exposures: np.ndarray
    k_max: int
    n_obs: int

    @property
    def active_range(self) -> tuple[int, int]:
        return 1, self.k_max

    @property
    def active_counts(self) -> np.ndarray:
        return self.counts[: self.k_max]

    @property
    def active_exposures(self) -> np.ndarray:
        return self.exposures[: self.k_max]

    @property
    def n_events(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "NodeStats") -> "NodeStats":
        return NodeStats(self.counts + other.counts, self.exposures + other.exposures,
                         max(self.k_max, other.k_max), self.n_obs + other.n_obs)


def _stats_from_bins(bins, offsets, status, widths, K) -> NodeStats:
    if bins.shape[0] == 0:
        raise DataError("cannot compute statistics of an empty node")
    counts = np.bincount(bins, weights=status, minlength=K)
    occupied = np.bincount(bins, minlength=K)
    partial = np.bincount(bins, weights=offsets, minlength=K)
    beyond = bins.shape[0] - np.cumsum(occupied)  # observations past s_k
    exposures = partial + beyond * widths
    return NodeStats(counts.astype(np.int64), exposures, int(bins.max()) + 1, int(bins.shape[0]))


def node_stats(times, status, grid: BinGrid) -> NodeStats:
    """Event counts and exposures per bin for one set of normalized times."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise DataError("cannot compute statistics of an empty node")
    b, off = grid.locate(times)
    return _stats_from_bins(b, off, np.asarray(status, dtype=float), np.diff(grid.endpoints), grid.K)


class BinnedTimes:
    """Per-row bin assignment of a normalized dataset, for fast subset statistics."""

    def __init__(self, data: NormalizedDataset, grid: BinGrid):
        self.grid = grid
        self.bins, self.offsets = grid.locate(data.times)
        self.status = data.status.astype(float)
        self.widths = np.diff(grid.endpoints)

    def stats(self, idx) -> NodeStats:
        return _stats_from_bins(self.bins[idx], self.offsets[idx], self.status[idx],
                                self.widths, self.grid.K)


# -- CSV input/output ---------------------------------------------------------

def _label_key(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v).strip()


def _sorted_labels(values) -> tuple:
    uniq = sorted(set(values))
    try:
        return tuple(sorted(uniq, key=float))
    except ValueError:
        return tuple(uniq)


def load_schema(path) -> dict:
    """Read a JSON column-kind map ``{name: "continuous" | "categorical" | {...}}``."""
    try:
        with open(path, encoding="utf-8") as fh:
            schema = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read schema {path}: {exc}") from exc
    if not isinstance(schema, dict):
        raise DataError("schema must map column names to kinds")
    return schema


def _schema_entry(entry):
    if isinstance(entry, str):
        return entry, None
    if isinstance(entry, Mapping):
        labels = entry.get("labels")
        return entry.get("kind", CATEGORICAL if labels else CONTINUOUS), labels
    raise DataError(f"bad schema entry {entry!r}")


def _safe_float(v) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        return np.nan


def _numeric(series: pd.Series) -> pd.Series:
    """Exact (round-trip) string-to-float parsing; NaN where unparseable."""
    if series.dtype == object:
        return series.map(_safe_float).astype(float)
    return pd.to_numeric(series, errors="coerce")


def from_frame(frame: pd.DataFrame, schema: Mapping | None = None, time_col: str = "time",
               status_col: str = "status") -> SurvivalDataset:
    """Validate a string-typed frame and build a dataset.

    Columns not named in ``schema`` are inferred: numeric means continuous,
    anything else categorical.
    """
    schema = dict(schema or {})
    for col in (time_col, status_col):
        if col not in frame.columns:
            raise DataError(f"missing column {col!r}")
    if len(frame) == 0:
        raise DataError("dataset has no rows")
    if frame.isna().any().any():
        bad = frame.columns[frame.isna().any()].tolist()
        raise DataError(f"missing values in columns {bad}")
    times = _numeric(frame[time_col])
    if times.isna().any():
        raise DataError("non-numeric time")
    status = _numeric(frame[status_col])
    if status.isna().any() or not status.isin([0, 1]).all():
        raise DataError("invalid status: values must be 0 or 1")
    names, kinds, labels, cols = [], [], [], []
    for name in frame.columns:
        if name in (time_col, status_col):
            continue
        raw = frame[name]
        kind, declared = _schema_entry(schema.get(name)) if name in schema else (None, None)
        numeric = _numeric(raw)
        if kind is None:
            kind = CONTINUOUS if not numeric.isna().any() else CATEGORICAL
        if kind == CONTINUOUS:
            if numeric.isna().any():
                raise DataError(f"continuous column {name!r} has non-numeric values")
            cols.append(numeric.to_numpy(float))
            labels.append(None)
        elif kind == CATEGORICAL:
            keys = [_label_key(v) for v in raw]
            labs = tuple(str(l) for l in declared) if declared else _sorted_labels(keys)
            lookup = {lab: i for i, lab in enumerate(labs)}
            missing = sorted(set(keys) - set(lookup))
            if missing:
                raise DataError(f"column {name!r}: label {missing[0]!r} not in declared label set")
            cols.append(np.array([lookup[k] for k in keys], dtype=float))
            labels.append(labs)
        else:
            raise DataError(f"unknown kind {kind!r} for column {name!r}")
        names.append(name)
        kinds.append(kind)
    unknown = set(schema) - set(names) - {time_col, status_col}
    if unknown:
        raise DataError(f"schema names columns not in file: {sorted(unknown)}")
    X = np.column_stack(cols) if cols else np.empty((len(frame), 0))
    return SurvivalDataset(times.to_numpy(float), status.to_numpy().astype(np.int64), X, names,
                           kinds, labels, time_col, status_col)


def read_frame(path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, encoding="utf-8", skipinitialspace=True)
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc


def load_csv(path, schema: Mapping | str | Path | None = None, time_col: str = "time",
             status_col: str = "status") -> SurvivalDataset:
    """Load a comma-separated survival file.

    ``schema`` is either a mapping or the path of a JSON sidecar.
    """
    if isinstance(schema, (str, Path)):
        schema = load_schema(schema)
    return from_frame(read_frame(path), schema, time_col, status_col)


def write_csv(d: SurvivalDataset, path) -> None:
    cols = {d.time_name: [repr(float(t)) for t in d.times],
            d.status_name: [str(int(s)) for s in d.status]}
    for j, name in enumerate(d.names):
        if d.kinds[j] == CONTINUOUS:
            cols[name] = [repr(float(v)) for v in d.X[:, j]]
        else:
            cols[name] = d.decode_column(j)
    pd.DataFrame(cols).to_csv(path, index=False, lineterminator="\n")


def schema_of(d: SurvivalDataset) -> dict:
    """Schema sidecar reproducing the dataset's column kinds and label sets."""
    out = {}
    for name, kind, labs in zip(d.names, d.kinds, d.labels):
        out[name] = kind if labs is None else {"kind": kind, "labels": list(labs)}
    return out
