"""CSV ingestion, standardization + one-hot preprocessing, splits, noise."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("numeric", "categorical", "target")


class DataError(Exception):
    pass


class SchemaError(DataError):
    pass


class HeaderMismatchError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r} as a finite number")


class ArityError(DataError):
    def __init__(self, row, expected, got):
        self.row = row
        super().__init__(f"row {row}: expected {expected} cells, got {got}")


class EmptyFitError(DataError):
    pass


class NotFittedError(DataError):
    pass


class DegenerateClassError(DataError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    kind: str


@dataclass(frozen=True)
class Schema:
    columns: tuple
    delimiter: str = ";"
    positive_label: str = "yes"

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")
        for c in self.columns:
            if c.kind not in KINDS:
                raise SchemaError(f"column {c.name!r}: unknown kind {c.kind!r}")
        if sum(c.kind == "target" for c in self.columns) > 1:
            raise SchemaError("at most one target column is allowed")
        if len(self.delimiter) != 1:
            raise SchemaError("delimiter must be a single character")

    @property
    def names(self):
        return [c.name for c in self.columns]

    @property
    def numeric(self):
        return [c.name for c in self.columns if c.kind == "numeric"]

    @property
    def categorical(self):
        return [c.name for c in self.columns if c.kind == "categorical"]

    @property
    def target(self):
        for c in self.columns:
            if c.kind == "target":
                return c.name
        return None

    def to_dict(self):
        return {
            "delimiter": self.delimiter,
            "positive_label": self.positive_label,
            "columns": [{"name": c.name, "kind": c.kind} for c in self.columns],
        }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"delimiter", "positive_label", "columns"}
        if unknown:
            raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
        cols = tuple(Column(c["name"], c["kind"]) for c in d["columns"])
        return cls(cols, d.get("delimiter", ";"), d.get("positive_label", "yes"))

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RawTable:
    """Column-wise storage of a parsed CSV.

    ``numeric`` maps column name to a float64 array, ``categorical`` to an
    object array of labels, and ``target`` is an int array of 0/1 (or None).
    """

    schema: Schema
    numeric: dict
    categorical: dict
    target: np.ndarray | None = None

    @property
    def n_rows(self):
        for arr in (*self.numeric.values(), *self.categorical.values()):
            return len(arr)
        return 0 if self.target is None else len(self.target)

    def __len__(self):
        return self.n_rows


def _parse_float(text, row, column):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(row, column, text) from None
    if not math.isfinite(value):
        raise ParseError(row, column, text)
    return value


def load_csv(path, schema):
    """Read a delimited file whose header matches ``schema`` exactly.

    Rows in errors are numbered from 1 for the first data row. The label
    ``"unknown"`` is an ordinary category.
    """
    numeric = {name: [] for name in schema.numeric}
    categorical = {name: [] for name in schema.categorical}
    target = []
    labels_seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter, quotechar='"')
        header = next(reader, None)
        if header is None:
            raise HeaderMismatchError("file is empty (no header row)")
        header = [h.strip() for h in header]
        if header != schema.names:
            raise HeaderMismatchError(f"header {header} does not match schema {schema.names}")
        width = len(schema.columns)
        for i, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if len(cells) != width:
                raise ArityError(i, width, len(cells))
            for col, cell in zip(schema.columns, cells):
                if col.kind == "numeric":
                    numeric[col.name].append(_parse_float(cell, i, col.name))
                elif col.kind == "categorical":
                    categorical[col.name].append(cell)
                else:
                    labels_seen.add(cell)
                    if len(labels_seen) > 2:
                        raise ParseError(i, col.name, cell)
                    target.append(1 if cell == schema.positive_label else 0)
    return RawTable(
        schema=schema,
        numeric={k: np.asarray(v, dtype=np.float64) for k, v in numeric.items()},
        categorical={k: np.asarray(v, dtype=object) for k, v in categorical.items()},
        target=np.asarray(target, dtype=np.int64) if schema.target else None,
    )


@dataclass
class PreprocessPipeline:
    """Standardize numeric columns and one-hot encode categorical ones.

    Statistics are population (divisor n) and are computed only on the
    rows passed to :meth:`fit`.
    """

    schema: Schema
    means: dict = field(default_factory=dict)
    stds: dict = field(default_factory=dict)
    vocabularies: dict = field(default_factory=dict)
    fitted: bool = False

    def fit(self, table, rows=None):
        rows = np.arange(table.n_rows) if rows is None else np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            raise EmptyFitError("cannot fit on an empty row subset")
        for name in self.schema.numeric:
            col = table.numeric[name][rows]
            self.means[name] = float(col.mean())
            self.stds[name] = float(col.std())
        for name in self.schema.categorical:
            self.vocabularies[name] = sorted(set(table.categorical[name][rows].tolist()))
        self.fitted = True
        return self

    @property
    def width(self):
        return len(self.schema.numeric) + sum(len(v) for v in self.vocabularies.values())

    @property
    def feature_names(self):
        names = list(self.schema.numeric)
        for name in self.schema.categorical:
            names += [f"{name}={label}" for label in self.vocabularies[name]]
        return names

    @property
    def numeric_mask(self):
        mask = np.zeros(self.width, dtype=bool)
        mask[: len(self.schema.numeric)] = True
        return mask

    def transform(self, table, rows=None):
        if not self.fitted:
            raise NotFittedError("pipeline must be fitted before transform")
        rows = np.arange(table.n_rows) if rows is None else np.asarray(rows, dtype=np.int64)
        out = np.zeros((rows.size, self.width))
        j = 0
        for name in self.schema.numeric:
            std = self.stds[name]
            if std > 0:
                out[:, j] = (table.numeric[name][rows] - self.means[name]) / std
            j += 1
        for name in self.schema.categorical:
            vocab = self.vocabularies[name]
            lookup = {label: i for i, label in enumerate(vocab)}
            for r, label in enumerate(table.categorical[name][rows]):
                pos = lookup.get(label)
                if pos is not None:
                    out[r, j + pos] = 1.0
            j += len(vocab)
        return out

    def to_dict(self):
        return {
            "schema": self.schema.to_dict(),
            "means": self.means,
            "stds": self.stds,
            "vocabularies": self.vocabularies,
            "fitted": self.fitted,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            schema=Schema.from_dict(d["schema"]),
            means=dict(d["means"]),
            stds=dict(d["stds"]),
            vocabularies={k: list(v) for k, v in d["vocabularies"].items()},
            fitted=bool(d["fitted"]),
        )


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    seed: int
    ratio: float


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def _apportion(sizes, ratio, total):
    """Largest-remainder allocation of ``total`` test rows across classes."""
    quotas = [ratio * s for s in sizes]
    counts = [int(math.floor(q)) for q in quotas]
    order = sorted(range(len(sizes)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


def stratified_split(n, labels, ratio, rng, stratify=True):
    """Shuffle-then-cut train/test split with ``round(ratio * n)`` test rows.

    With ``stratify`` each class contributes its proportional share of test
    rows (largest-remainder rounding keeps the total exact).
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie strictly between 0 and 1")
    n_test = _round_half_up(ratio * n)
    if not stratify or labels is None:
        perm = rng.permutation(n)
        test = np.sort(perm[:n_test])
        train = np.sort(perm[n_test:])
        return SplitIndices(train, test, rng.seed, ratio)

    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError("labels must have length n")
    classes = np.unique(labels)
    members = [np.flatnonzero(labels == c) for c in classes]
    for c, idx in zip(classes, members):
        if idx.size < 2:
            raise DegenerateClassError(f"class {c!r} has fewer than 2 rows")
    counts = _apportion([idx.size for idx in members], ratio, n_test)
    test_parts, train_parts = [], []
    for idx, c in zip(members, counts):
        shuffled = idx[rng.permutation(idx.size)]
        test_parts.append(shuffled[:c])
        train_parts.append(shuffled[c:])
    return SplitIndices(
        np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts)), rng.seed, ratio
    )


def inject_noise(x, sigma, numeric_mask, rng):
    """Copy of ``x`` with N(0, sigma^2) noise added to masked columns only."""
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(numeric_mask, dtype=bool)
    if mask.shape != (x.shape[1],):
        raise ValueError("mask length must equal the number of columns")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    out = x.copy()
    if sigma == 0 or not mask.any() or x.shape[0] == 0:
        return out
    out[:, mask] += sigma * rng.normal(x.shape[0], int(mask.sum()))
    return out


def load_schema(path):
    """Schema from a JSON file; ``builtin:<name>`` loads a bundled schema."""
    path = str(path)
    if path.startswith("builtin:"):
        path = Path(__file__).parent / "data" / f"{path[len('builtin:'):]}.json"
    return Schema.from_file(path)
