"""Dataset handling: LIBSVM text parsing, splits, label noise, sampling.

Rows are stored sparse (1-based feature index -> value) end to end;
densification happens only where the linear map W x needs it. Raw labels
are canonicalized to 1..C by the sorted order of distinct raw values, so
the mapping does not depend on file order. Label-noise streams are derived
per row from (seed, row index), making corruption reproducible and
independent of iteration order or subsetting.

Parsing is single-pass; datasets are immutable afterwards and freely
shared across threads.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ParseError",
    "SparseRow",
    "LabeledDataset",
    "NoiseSpec",
    "parse_libsvm",
    "serialize_libsvm",
    "dataset_summary",
    "split",
    "inject_symmetric_noise",
    "sample_projected_categorical",
    "dense_matrix",
    "standardize",
]


class ParseError(ValueError):
    """Malformed LIBSVM input; carries the 1-based line and column."""

    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class SparseRow:
    """One example: strictly increasing 1-based indices and their values."""

    indices: tuple[int, ...]
    values: tuple[float, ...]

    def to_dense(self, n_features: int) -> np.ndarray:
        out = np.zeros(n_features)
        if self.indices:
            out[np.asarray(self.indices) - 1] = self.values
        return out


@dataclass(frozen=True)
class LabeledDataset:
    rows: tuple[SparseRow, ...]
    labels: tuple[int, ...]          # canonical 1..C
    raw_labels: tuple[float, ...]    # as parsed, for faithful re-serialization
    n_features: int
    n_classes: int
    label_map: dict[float, int]      # raw -> canonical

    def __post_init__(self):
        if not self.rows:
            raise ValueError("dataset must be non-empty")
        if len(self.rows) != len(self.labels):
            raise ValueError("row/label count mismatch")

    def __len__(self) -> int:
        return len(self.rows)

    def subset(self, idx: Sequence[int]) -> "LabeledDataset":
        idx = list(idx)
        return LabeledDataset(
            tuple(self.rows[i] for i in idx),
            tuple(self.labels[i] for i in idx),
            tuple(self.raw_labels[i] for i in idx),
            self.n_features, self.n_classes, dict(self.label_map))

    def with_labels(self, labels: Sequence[int]) -> "LabeledDataset":
        if len(labels) != len(self.rows):
            raise ValueError("label count mismatch")
        return LabeledDataset(self.rows, tuple(int(v) for v in labels), self.raw_labels,
                              self.n_features, self.n_classes, dict(self.label_map))


@dataclass(frozen=True)
class NoiseSpec:
    """Symmetric label-noise parameters: corruption probability and seed."""

    eta: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta {self.eta!r} outside [0, 1]")


def _parse_float(token: str, line_no: int, col: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(line_no, col, f"malformed {what} {token!r}") from None
    if math.isnan(value) or math.isinf(value):
        raise ParseError(line_no, col, f"non-finite {what} {token!r}")
    return value


def parse_libsvm(source, n_features: int | None = None,
                 n_classes: int | None = None) -> LabeledDataset:
    """Parse LIBSVM text: one `<label> <idx>:<val> ...` line per example.

    Feature indices must be positive and strictly increasing within a
    line. Raw labels are mapped to 1..C by sorted order of the distinct
    values seen; the number of features defaults to the largest index and
    the number of classes to the distinct label count, unless overridden
    upward (a file need not contain every class). Errors report the exact
    1-based line and column.
    """
    if isinstance(source, str):
        stream: Iterable[str] = io.StringIO(source)
    else:
        stream = source
    rows: list[SparseRow] = []
    raws: list[float] = []
    max_index = 0
    saw_line = False
    for line_no, line in enumerate(stream, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        saw_line = True
        tokens = []
        col = 0
        for part in line.rstrip("\n").split(" "):
            if part:
                tokens.append((part, col + 1))
            col += len(part) + 1
        raws.append(_parse_float(tokens[0][0], line_no, tokens[0][1], "label"))
        indices: list[int] = []
        values: list[float] = []
        prev = 0
        for token, tcol in tokens[1:]:
            head, sep, tail = token.partition(":")
            if not sep or not head or not tail:
                raise ParseError(line_no, tcol, f"malformed feature token {token!r}")
            try:
                index = int(head)
            except ValueError:
                raise ParseError(line_no, tcol, f"malformed feature index {head!r}") from None
            if index < 1:
                raise ParseError(line_no, tcol, f"feature index {index} must be positive")
            if index <= prev:
                raise ParseError(line_no, tcol,
                                 f"feature index {index} not increasing (follows {prev})")
            prev = index
            indices.append(index)
            values.append(_parse_float(tail, line_no, tcol + len(head) + 1, "feature value"))
        max_index = max(max_index, prev)
        rows.append(SparseRow(tuple(indices), tuple(values)))
    if not saw_line:
        raise ParseError(1, 1, "empty input")
    distinct = sorted(set(raws))
    label_map = {raw: i + 1 for i, raw in enumerate(distinct)}
    p = n_features if n_features is not None else max_index
    if p < max_index:
        raise ValueError(f"n_features override {p} below largest index {max_index}")
    if p < 1:
        raise ValueError("dataset has no features")
    c = n_classes if n_classes is not None else len(distinct)
    if c < len(distinct):
        raise ValueError(f"n_classes override {c} below the {len(distinct)} distinct labels")
    return LabeledDataset(tuple(rows), tuple(label_map[r] for r in raws), tuple(raws),
                          p, c, label_map)


def serialize_libsvm(ds: LabeledDataset) -> str:
    """Canonical text form; parsing it back yields an identical dataset."""
    lines = []
    for raw, row in zip(ds.raw_labels, ds.rows):
        parts = [repr(raw)] + [f"{i}:{repr(v)}" for i, v in zip(row.indices, row.values)]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def dataset_summary(ds: LabeledDataset) -> str:
    """JSON summary: size, feature count, class count, label mapping."""
    return json.dumps({
        "n_examples": len(ds),
        "n_features": ds.n_features,
        "n_classes": ds.n_classes,
        "label_map": {repr(k): v for k, v in sorted(ds.label_map.items())},
    }, indent=2)


def split(ds: LabeledDataset, train_frac: float, seed: int):
    """Seeded permutation split; the first floor(N * frac) rows train.

    The two sides are disjoint and exhaustive; either side empty is an
    error.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac {train_frac!r} outside (0, 1)")
    n = len(ds)
    n_train = int(n * train_frac)
    if n_train == 0 or n_train == n:
        raise ValueError(f"train_frac {train_frac} leaves an empty side for {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(perm[:n_train]), ds.subset(perm[n_train:])


def inject_symmetric_noise(labels: Sequence[int], n_classes: int, spec: NoiseSpec,
                           indices: Sequence[int] | None = None) -> tuple[int, ...]:
    """Corrupt each label independently with probability eta, replacing it
    uniformly among the other C-1 classes.

    The stream for a row derives from (seed, row index), so corruption is
    independent of iteration order and commutes with subsetting when the
    original row indices are passed through ``indices`` (default: positional).
    """
    if n_classes < 2 and spec.eta > 0.0:
        raise ValueError("need at least 2 classes to corrupt labels")
    if indices is None:
        indices = range(len(labels))
    elif len(indices) != len(labels):
        raise ValueError("indices length must match labels length")
    out = []
    for i, y in zip(indices, labels):
        if not 1 <= y <= n_classes:
            raise ValueError(f"label {y} outside 1..{n_classes}")
        rng = np.random.default_rng((spec.seed, int(i)))
        if rng.random() < spec.eta:
            other = int(rng.integers(n_classes - 1)) + 1
            out.append(other if other < y else other + 1)
        else:
            out.append(int(y))
    return tuple(out)


def sample_projected_categorical(p_tilde, n: int, seed: int = 0) -> np.ndarray:
    """Draw n binary vectors with at most one 1: component i with
    probability p_i, the all-zero vector with the leftover mass. Appending
    the leftover indicator turns each draw into a one-hot sample of the
    full C-class distribution."""
    from . import simplex

    arr = simplex.validate_projected_point(p_tilde)
    rng = np.random.default_rng(seed)
    cum = np.cumsum(arr)
    picks = np.searchsorted(cum, rng.random(n), side="right")
    out = np.zeros((n, arr.size), dtype=np.int8)
    explicit = picks < arr.size
    out[np.nonzero(explicit)[0], picks[explicit]] = 1
    return out


def dense_matrix(ds: LabeledDataset, idx: Sequence[int] | None = None) -> np.ndarray:
    """Materialize rows as a dense (n, p) matrix at the linear-map boundary."""
    rows = ds.rows if idx is None else [ds.rows[i] for i in idx]
    out = np.zeros((len(rows), ds.n_features))
    for r, row in enumerate(rows):
        if row.indices:
            out[r, np.asarray(row.indices) - 1] = row.values
    return out


def standardize(train: LabeledDataset, test: LabeledDataset | None = None):
    """Per-feature standardization fitted on train (off by default in the
    CLI; provided because preprocessing is otherwise unspecified).
    Constant features are left centered with unit divisor."""
    x = dense_matrix(train)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0.0] = 1.0

    def rebuild(ds: LabeledDataset) -> LabeledDataset:
        dense = (dense_matrix(ds) - mean) / std
        rows = tuple(SparseRow(tuple(range(1, ds.n_features + 1)), tuple(map(float, r)))
                     for r in dense)
        return LabeledDataset(rows, ds.labels, ds.raw_labels, ds.n_features,
                              ds.n_classes, dict(ds.label_map))

    if test is None:
        return rebuild(train), (mean, std)
    return rebuild(train), rebuild(test), (mean, std)
