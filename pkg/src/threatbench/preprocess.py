"""Encoding, scaling, imbalance handling and sessionization.

Fit operations consume the training partition only; the fitted specs are
immutable and safe to apply anywhere. Categorical levels are ordered
lexicographically at fit time so "drop the first level" is stable across runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .tabular import Dataset, RngStream


@dataclass(frozen=True)
class EncoderSpec:
    """Ordered category lists per encoded column; the first level is dropped."""

    categories: dict  # column -> tuple of categories, lexicographic

    def dropped(self, column: str) -> str:
        return self.categories[column][0]

    def output_width(self) -> int:
        return sum(len(c) - 1 for c in self.categories.values())


def fit_one_hot(dataset: Dataset, columns) -> EncoderSpec:
    cats = {}
    for col in columns:
        if dataset.kind_of(col) != "categorical":
            raise DataError(f"column {col!r} is not categorical")
        cats[col] = tuple(sorted(set(dataset.column(col))))
    return EncoderSpec(categories=cats)


def apply_one_hot(spec: EncoderSpec, dataset: Dataset) -> Dataset:
    """Replace each encoded column by |categories|-1 binary columns.

    The lexicographically first category maps to the all-zeros pattern; a
    category unseen at fit time is an error, not a silent zero row (silent
    zeros would alias the dropped category).
    """
    columns = []
    data = {}
    for name, kind in dataset.columns:
        if name not in spec.categories:
            columns.append((name, kind))
            data[name] = dataset.column(name)
            continue
        cats = spec.categories[name]
        values = dataset.column(name)
        known = set(cats)
        for i, v in enumerate(values):
            if v not in known:
                raise DataError(f"unseen category {v!r} in column {name!r} (row {i})")
        for cat in cats[1:]:
            out_name = f"{name}={cat}"
            columns.append((out_name, "binary"))
            data[out_name] = np.fromiter((1 if v == cat else 0 for v in values), dtype=np.int64, count=len(values))
    return Dataset(columns, data, row_ids=dataset.row_ids, meta=dataset.meta)


@dataclass(frozen=True)
class ScalerSpec:
    """Per-column population mean/std; zero-variance columns are flagged."""

    stats: dict  # column -> (mean, std)

    def zero_variance_columns(self):
        return [c for c, (_, s) in self.stats.items() if s == 0.0]


def fit_scaler(dataset: Dataset, columns) -> ScalerSpec:
    stats = {}
    for col in columns:
        if dataset.kind_of(col) != "numeric":
            raise DataError(f"column {col!r} is not numeric")
        arr = np.asarray(dataset.column(col), dtype=np.float64)
        stats[col] = (float(arr.mean()), float(arr.std()))
    return ScalerSpec(stats=stats)


def apply_scaler(spec: ScalerSpec, dataset: Dataset) -> Dataset:
    data = {}
    for name, kind in dataset.columns:
        vals = dataset.column(name)
        if name in spec.stats:
            mean, std = spec.stats[name]
            arr = np.asarray(vals, dtype=np.float64)
            vals = np.zeros_like(arr) if std == 0.0 else (arr - mean) / std
        data[name] = vals
    return Dataset(dataset.columns, data, row_ids=dataset.row_ids, meta=dataset.meta)


def smote_oversample(minority_rows: np.ndarray, k: int, n_synthetic: int, rng: RngStream) -> np.ndarray:
    """Interpolated minority samples: x' = x + u * (nn - x), u ~ U[0,1].

    The parent is a uniformly chosen minority row, the neighbor one of its k
    Euclidean nearest minority neighbors (self excluded, distance ties broken
    by row index). Returns exactly n_synthetic rows.
    """
    X = np.asarray(minority_rows, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected a 2-D minority matrix, got shape {X.shape}")
    m = X.shape[0]
    if m <= k:
        raise DataError(f"minority count {m} must exceed neighbor count k={k}")
    if n_synthetic == 0:
        return np.empty((0, X.shape[1]))

    diffs = X[:, None, :] - X[None, :, :]
    dist = np.sqrt((diffs**2).sum(axis=2))
    neighbors = np.empty((m, k), dtype=np.int64)
    for i in range(m):
        order = np.argsort(dist[i], kind="stable")  # index order breaks ties
        order = order[order != i]
        neighbors[i] = order[:k]

    parents = rng.integers(0, m, size=n_synthetic)
    picks = rng.integers(0, k, size=n_synthetic)
    u = rng.random(n_synthetic)
    nn = neighbors[parents, picks]
    return X[parents] + u[:, None] * (X[nn] - X[parents])


def downsample_majority(dataset: Dataset, label_column: str, target_majority_ratio: float, rng: RngStream) -> Dataset:
    """Subsample the majority class to target_majority_ratio : 1 against the minority.

    All minority rows are kept; the surviving rows are reshuffled by rng.
    """
    labels = np.asarray(dataset.column(label_column))
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) != 2:
        raise DataError(f"need exactly two classes, got {classes.tolist()}")
    minority_cls = classes[np.argmin(counts)]
    majority_cls = classes[np.argmax(counts)]
    n_min = int(counts.min())
    n_maj = int(counts.max())
    target = int(math.floor(n_min * target_majority_ratio + 0.5))
    if target_majority_ratio <= 0 or target < 1:
        raise DataError(f"target majority ratio {target_majority_ratio} leaves no majority rows")
    if target > n_maj:
        raise DataError(
            f"target ratio {target_majority_ratio} needs {target} majority rows, only {n_maj} exist"
        )
    majority_idx = np.flatnonzero(labels == majority_cls)
    keep_maj = majority_idx[rng.permutation(n_maj)[:target]]
    keep = np.concatenate([np.flatnonzero(labels == minority_cls), keep_maj])
    keep = keep[rng.permutation(len(keep))]
    return dataset.select_rows(keep)


@dataclass
class SessionTensor:
    """Zero-padded (sessions x time_steps x features) array with lengths and labels."""

    data: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray
    feature_names: list
    keys: list = field(default_factory=list)  # (user_id, day) per session
    event_row_ids: list = field(default_factory=list)  # provenance for the leakage audit

    @property
    def n_sessions(self) -> int:
        return self.data.shape[0]

    @property
    def time_steps(self) -> int:
        return self.data.shape[1]

    def select(self, indices) -> "SessionTensor":
        indices = np.asarray(indices, dtype=np.int64)
        return SessionTensor(
            data=self.data[indices],
            lengths=self.lengths[indices],
            labels=self.labels[indices],
            feature_names=list(self.feature_names),
            keys=[self.keys[i] for i in indices] if self.keys else [],
            event_row_ids=[self.event_row_ids[i] for i in indices] if self.event_row_ids else [],
        )


def sessionize(events: Dataset, time_steps: int, group_columns=("user_id", "day"), label_column="anomaly_label") -> SessionTensor:
    """Group events into per-(user, day) sequences of at most time_steps steps.

    Features are every numeric/binary column except the group keys; events keep
    their row order (the generators emit user/day/hour order). Longer sessions
    are truncated to their earliest time_steps events; the session label is the
    max anomaly flag over all of the session's events, truncated ones included.
    """
    if time_steps < 1:
        raise DataError(f"time_steps must be >= 1, got {time_steps}")
    feature_names = [
        n for n, k in events.columns
        if k in ("numeric", "binary") and n not in group_columns
    ]
    X = events.matrix(feature_names)
    labels = np.asarray(events.column(label_column))
    gu = np.asarray(events.column(group_columns[0]))
    gd = np.asarray(events.column(group_columns[1]))

    groups = {}
    for i in range(events.n):
        groups.setdefault((float(gu[i]), float(gd[i])), []).append(i)
    keys = sorted(groups)

    S = len(keys)
    data = np.zeros((S, time_steps, len(feature_names)))
    lengths = np.zeros(S, dtype=np.int64)
    sess_labels = np.zeros(S, dtype=np.int64)
    row_ids = []
    for s, key in enumerate(keys):
        idx = groups[key]
        take = idx[:time_steps]
        data[s, : len(take)] = X[take]
        lengths[s] = len(take)
        sess_labels[s] = int(labels[idx].max())
        row_ids.append([int(events.row_ids[i]) for i in idx])
    return SessionTensor(
        data=data,
        lengths=lengths,
        labels=sess_labels,
        feature_names=feature_names,
        keys=keys,
        event_row_ids=row_ids,
    )


def save_session_tensor(tensor: SessionTensor, path) -> None:
    """Text format: one JSON header line, then one comma-separated line per
    (session, step) in row-major order, floats as exact reprs."""
    header = {
        "version": 1,
        "sessions": int(tensor.n_sessions),
        "time_steps": int(tensor.time_steps),
        "features": list(tensor.feature_names),
        "lengths": tensor.lengths.tolist(),
        "labels": tensor.labels.tolist(),
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            flat = tensor.data.reshape(-1, tensor.data.shape[2])
            for row in flat:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write session tensor to {path}: {exc}") from exc


def load_session_tensor(path) -> SessionTensor:
    try:
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            rows = [[float(v) for v in line.rstrip("\n").split(",")] for line in fh if line.strip()]
    except FileNotFoundError as exc:
        raise DataError(f"session tensor file not found: {path}") from exc
    S, T = header["sessions"], header["time_steps"]
    d = len(header["features"])
    data = np.asarray(rows, dtype=np.float64).reshape(S, T, d) if rows else np.zeros((S, T, d))
    return SessionTensor(
        data=data,
        lengths=np.asarray(header["lengths"], dtype=np.int64),
        labels=np.asarray(header["labels"], dtype=np.int64),
        feature_names=list(header["features"]),
    )
