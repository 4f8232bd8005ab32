"""Typed column tables, seeded randomness, CSV I/O, summaries and stratified splits.

Everything downstream (generators, preprocessing, models, pipelines) moves data
around as a `Dataset`: an immutable-by-convention table whose columns carry one
of four kinds (numeric, categorical, binary, label). Randomness everywhere goes
through `RngStream`, a splittable counter-based stream, so results depend only
on (seed, label) and never on draw order elsewhere.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

KINDS = ("numeric", "categorical", "binary", "label")


class RngStream:
    """Splittable seeded random stream.

    Backed by the Philox counter-based bit generator keyed by
    sha256(seed, label), so a (seed, label) pair always produces the same
    sequence and child streams with distinct labels are independent of how
    much the parent has been consumed.

    Distribution methods (``normal``, ``integers``, ``choice``, ...) are
    delegated to the underlying numpy Generator.
    """

    def __init__(self, seed: int, label: str = "root"):
        self.seed = int(seed)
        self.label = label
        key = hashlib.sha256(f"{self.seed}:{label}".encode()).digest()
        self.gen = np.random.Generator(np.random.Philox(key=int.from_bytes(key[:16], "little")))

    def child(self, label: str) -> "RngStream":
        """Derive an independent stream tagged `parent-label/label`."""
        return RngStream(self.seed, f"{self.label}/{label}")

    def __getattr__(self, name):
        return getattr(self.gen, name)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, label={self.label!r})"


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class Dataset:
    """Column table with typed columns and stable row identities.

    Columns are stored column-major: numeric as float arrays, binary/label as
    int arrays, categorical as string lists. `row_ids` track provenance back
    to the originating table across row selections (used by the leakage
    audit); synthetic rows carry id -1.
    """

    def __init__(self, columns, data, row_ids=None, meta=None):
        self.columns = [(str(n), str(k)) for n, k in columns]
        names = [n for n, _ in self.columns]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate column names: {names}")
        labels = [n for n, k in self.columns if k == "label"]
        if len(labels) > 1:
            raise DataError(f"more than one label column: {labels}")
        for n, k in self.columns:
            if k not in KINDS:
                raise DataError(f"unknown column kind {k!r} for column {n!r}")

        self._data = {}
        n_rows = None
        for name, kind in self.columns:
            if name not in data:
                raise DataError(f"missing data for column {name!r}")
            vals = data[name]
            if kind == "numeric":
                vals = np.asarray(vals, dtype=np.float64)
            elif kind in ("binary", "label"):
                vals = np.asarray(vals, dtype=np.int64)
                if kind == "binary" and vals.size and not np.isin(vals, (0, 1)).all():
                    bad = vals[~np.isin(vals, (0, 1))][0]
                    raise DataError(f"binary column {name!r} contains {bad!r}")
            else:
                vals = [str(v) for v in vals]
            if n_rows is None:
                n_rows = len(vals)
            elif len(vals) != n_rows:
                raise DataError(f"column {name!r} has {len(vals)} rows, expected {n_rows}")
            self._data[name] = vals
        if n_rows is None:
            # zero-width table (every column encoded away): rows live on in ids
            n_rows = 0 if row_ids is None else len(row_ids)
        self.n = n_rows
        self.row_ids = np.arange(self.n) if row_ids is None else np.asarray(row_ids, dtype=np.int64)
        if len(self.row_ids) != self.n:
            raise DataError("row_ids length does not match row count")
        self.meta = dict(meta) if meta else {}

    # -- basic access -------------------------------------------------------

    @property
    def column_names(self):
        return [n for n, _ in self.columns]

    def kind_of(self, name: str) -> str:
        for n, k in self.columns:
            if n == name:
                return k
        raise DataError(f"no such column: {name!r}")

    def column(self, name: str):
        if name not in self._data:
            raise DataError(f"no such column: {name!r}")
        return self._data[name]

    def label_column(self):
        for n, k in self.columns:
            if k == "label":
                return n
        return None

    def names_of_kind(self, *kinds):
        return [n for n, k in self.columns if k in kinds]

    def matrix(self, names=None) -> np.ndarray:
        """Float matrix of the named (default: all numeric+binary) columns."""
        if names is None:
            names = self.names_of_kind("numeric", "binary")
        cols = []
        for name in names:
            if self.kind_of(name) == "categorical":
                raise DataError(f"column {name!r} is categorical; encode it first")
            cols.append(np.asarray(self.column(name), dtype=np.float64))
        if not cols:
            return np.empty((self.n, 0))
        return np.column_stack(cols)

    def select_rows(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        data = {}
        for name, kind in self.columns:
            vals = self._data[name]
            if kind == "categorical":
                data[name] = [vals[i] for i in indices]
            else:
                data[name] = vals[indices]
        return Dataset(self.columns, data, row_ids=self.row_ids[indices])

    def equals(self, other: "Dataset") -> bool:
        """Value-for-value equality (column names, kinds, every cell)."""
        if self.columns != other.columns or self.n != other.n:
            return False
        for name, kind in self.columns:
            a, b = self._data[name], other._data[name]
            if kind == "categorical":
                if a != b:
                    return False
            elif not np.array_equal(a, b):
                return False
        return True

    def __repr__(self):
        return f"Dataset(n={self.n}, columns={self.column_names})"


# -- CSV I/O ----------------------------------------------------------------


def _format_cell(value, kind: str) -> str:
    if kind == "numeric":
        return repr(float(value))
    if kind in ("binary", "label"):
        return str(int(value))
    return str(value)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a Dataset as header + comma-separated rows.

    Numeric cells use shortest round-trip float repr, so save → load is exact
    and two saves of the same table are byte-identical.
    """
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(dataset.column_names)
            kinds = [k for _, k in dataset.columns]
            columns = [dataset.column(n) for n in dataset.column_names]
            for i in range(dataset.n):
                writer.writerow(
                    [_format_cell(col[i], kind) for col, kind in zip(columns, kinds)]
                )
    except OSError as exc:
        raise DataError(f"cannot write dataset to {path}: {exc}") from exc


def load_dataset(path, schema) -> Dataset:
    """Parse a CSV file against a declared schema of (name, kind) pairs.

    The header row must match the schema names exactly; cells are parsed per
    kind and a bad cell is reported with its row number and column name.
    """
    schema = [(str(n), str(k)) for n, k in schema]
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file, expected a header row")
            expected = [n for n, _ in schema]
            if header != expected:
                raise DataError(f"{path}: header {header} does not match schema {expected}")
            rows = list(reader)
    except FileNotFoundError as exc:
        raise DataError(f"dataset file not found: {path}") from exc

    data = {name: [] for name, _ in schema}
    for r, row in enumerate(rows, start=2):  # header is line 1
        if len(row) != len(schema):
            raise DataError(f"{path}: row {r} has {len(row)} cells, expected {len(schema)}")
        for cell, (name, kind) in zip(row, schema):
            if kind == "numeric":
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: unparseable numeric cell {cell!r} at row {r}, column {name!r}"
                    )
            elif kind in ("binary", "label"):
                try:
                    value = int(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: unparseable integer cell {cell!r} at row {r}, column {name!r}"
                    )
                if kind == "binary" and value not in (0, 1):
                    raise DataError(
                        f"{path}: binary cell {cell!r} out of range at row {r}, column {name!r}"
                    )
            else:
                value = cell
            data[name].append(value)
    return Dataset(schema, data)


# -- summaries ---------------------------------------------------------------


@dataclass
class ColumnSummary:
    """Per-column statistics: numeric moments/quantiles or value counts."""

    name: str
    kind: str
    mean: float | None = None
    std: float | None = None
    min: float | None = None
    q25: float | None = None
    median: float | None = None
    q75: float | None = None
    max: float | None = None
    counts: dict = field(default_factory=dict)


def nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """ceil(q*n)-th order statistic (1-based) of an already-sorted array."""
    n = len(sorted_values)
    k = max(1, math.ceil(q * n))
    return float(sorted_values[k - 1])


def summarize_columns(dataset: Dataset) -> list[ColumnSummary]:
    if dataset.n == 0:
        raise DataError("cannot summarize an empty dataset")
    out = []
    for name, kind in dataset.columns:
        vals = dataset.column(name)
        if kind == "numeric":
            arr = np.sort(np.asarray(vals, dtype=np.float64))
            out.append(
                ColumnSummary(
                    name=name,
                    kind=kind,
                    mean=float(arr.mean()),
                    std=float(arr.std()),  # population
                    min=float(arr[0]),
                    q25=nearest_rank(arr, 0.25),
                    median=nearest_rank(arr, 0.50),
                    q75=nearest_rank(arr, 0.75),
                    max=float(arr[-1]),
                )
            )
        else:
            counts = {}
            for v in (vals.tolist() if isinstance(vals, np.ndarray) else vals):
                counts[v] = counts.get(v, 0) + 1
            out.append(ColumnSummary(name=name, kind=kind, counts=counts))
    return out


# -- splitting ----------------------------------------------------------------


def stratified_indices(labels, test_fraction: float, rng: RngStream):
    """Per-class index split: round-half-up of class_count × test_fraction to test.

    Selection within a class is an rng shuffle; both returned index arrays keep
    original order. Leftover rows from rounding stay in train.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    test_idx = []
    for cls in classes:
        members = np.flatnonzero(labels == cls)
        if len(members) < 2:
            raise DataError(f"class {cls!r} has {len(members)} members; need at least 2")
        take = _round_half_up(len(members) * test_fraction)
        shuffled = members[rng.permutation(len(members))]
        test_idx.extend(shuffled[:take].tolist())
    test_mask = np.zeros(len(labels), dtype=bool)
    test_mask[test_idx] = True
    return np.flatnonzero(~test_mask), np.flatnonzero(test_mask)


def stratified_split(dataset: Dataset, label_column: str, test_fraction: float, rng: RngStream):
    """Split a dataset per class; see stratified_indices for the rounding rule."""
    train_idx, test_idx = stratified_indices(dataset.column(label_column), test_fraction, rng)
    return dataset.select_rows(train_idx), dataset.select_rows(test_idx)
