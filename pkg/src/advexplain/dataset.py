"""Labeled packet-feature datasets: schema, CSV I/O, stratified splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InsufficientClassError, ParseError, SchemaMismatchError

DEFAULT_FEATURES = (
    "frame.len",
    "udp.dstport",
    "ip.flags",
    "tcp.dstport",
    "ip.ttl",
    "udp.srcport",
    "ip.len",
)

LABEL_COLUMN = "label"


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...] = DEFAULT_FEATURES

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise ValueError("schema needs at least one feature")
        if any(not n for n in names):
            raise ValueError("feature names must be non-empty")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate feature names in {names}")

    @property
    def count(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}; schema has {list(self.names)}") from None


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix ``x`` (float64) with binary labels ``y`` (0 benign, 1 malicious).

    ``row_ids`` maps each row back to the dataset it was carved from; for a
    freshly loaded dataset it is simply ``arange(n)``.
    """

    schema: FeatureSchema
    x: np.ndarray
    y: np.ndarray
    row_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        if x.ndim == 1 and x.size == 0:
            x = x.reshape(0, self.schema.count)
        y = np.ascontiguousarray(self.y, dtype=np.int8).reshape(-1)
        if x.ndim != 2 or x.shape[1] != self.schema.count:
            raise SchemaMismatchError(
                f"feature matrix shape {x.shape} does not match {self.schema.count} schema features"
            )
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(x)):
            raise ValueError("feature matrix contains NaN or Inf")
        if y.size and not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 (benign) or 1 (malicious)")
        row_ids = self.row_ids
        if row_ids is None:
            row_ids = np.arange(x.shape[0], dtype=np.int64)
        row_ids = np.asarray(row_ids, dtype=np.int64)
        if row_ids.shape != (x.shape[0],):
            raise ValueError("row_ids must have one entry per row")
        x.setflags(write=False)
        y.setflags(write=False)
        row_ids.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "row_ids", row_ids)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def take(self, rows) -> "LabeledDataset":
        """Subset by positional row indices; ``row_ids`` follow the rows."""
        rows = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(self.schema, self.x[rows], self.y[rows], self.row_ids[rows])

    def with_labels(self, y) -> "LabeledDataset":
        return LabeledDataset(self.schema, self.x, y, self.row_ids)

    def class_counts(self) -> tuple[int, int]:
        n1 = int(np.count_nonzero(self.y))
        return len(self) - n1, n1

    def equals(self, other: "LabeledDataset") -> bool:
        return (
            self.schema == other.schema
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
        )


def concat(datasets: Sequence[LabeledDataset]) -> LabeledDataset:
    if not datasets:
        raise ValueError("nothing to concatenate")
    schema = datasets[0].schema
    for d in datasets[1:]:
        if d.schema != schema:
            raise SchemaMismatchError("cannot concatenate datasets with different schemas")
    x = np.concatenate([d.x for d in datasets], axis=0)
    y = np.concatenate([d.y for d in datasets])
    return LabeledDataset(schema, x, y)


def _format_value(v: float) -> str:
    # Integral values print without a trailing ".0"; everything else uses repr,
    # which round-trips float64 exactly.
    if v.is_integer() and abs(v) < 2**53 and math.copysign(1.0, v) > 0:
        return str(int(v))
    return repr(v)


def emit_csv(dataset: LabeledDataset, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(dataset.schema.names) + [LABEL_COLUMN])
        for row, label in zip(dataset.x.tolist(), dataset.y.tolist()):
            writer.writerow([_format_value(v) for v in row] + [str(label)])


def load_csv(path, schema: FeatureSchema | None = None) -> LabeledDataset:
    """Read a dataset CSV whose header is the schema's names plus ``label``.

    Row numbers in errors count the header as row 1, so they match a text
    editor's line numbers.
    """
    schema = schema or FeatureSchema()
    expected = list(schema.names) + [LABEL_COLUMN]
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatchError(f"{path}: empty file, expected header {expected}") from None
        if header != expected:
            missing = [c for c in expected if c not in header]
            extra = [c for c in header if c not in expected]
            raise SchemaMismatchError(
                f"{path}: header {header} does not match {expected} "
                f"(missing={missing}, extra={extra})"
            )
        width = len(expected)
        rows: list[list[float]] = []
        labels: list[int] = []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != width:
                raise ParseError(f"{path}: row {lineno} has {len(record)} cells, expected {width}", row=lineno)
            try:
                values = [float(c) for c in record[:-1]]
            except ValueError:
                raise ParseError(f"{path}: row {lineno} has a non-numeric feature cell", row=lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise ParseError(f"{path}: row {lineno} has a non-finite feature value", row=lineno)
            cell = record[-1].strip()
            if cell not in ("0", "1"):
                raise ParseError(f"{path}: row {lineno} has label {cell!r}, expected 0 or 1", row=lineno)
            rows.append(values)
            labels.append(int(cell))
    x = np.array(rows, dtype=np.float64).reshape(len(rows), schema.count)
    return LabeledDataset(schema, x, np.array(labels, dtype=np.int8))


@dataclass(frozen=True)
class SplitResult:
    train: LabeledDataset
    test: LabeledDataset
    seed: int


def stratified_split(dataset: LabeledDataset, test_fraction: float = 0.25, seed: int = 0) -> SplitResult:
    """Shuffle each class with a seeded generator and cut a prefix off for test.

    Per-class test counts are ``round(n_c * test_fraction)``; train and test
    keep ascending source order so downstream indices stay stable.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    test_rows = []
    for label in (0, 1):
        members = np.flatnonzero(dataset.y == label)
        if members.size < 2:
            raise InsufficientClassError(
                f"class {label} has {members.size} samples; stratified split needs at least 2"
            )
        n_test = int(round(members.size * test_fraction))
        n_test = min(max(n_test, 1), members.size - 1)
        test_rows.append(rng.permutation(members)[:n_test])
    test_idx = np.sort(np.concatenate(test_rows))
    mask = np.ones(len(dataset), dtype=bool)
    mask[test_idx] = False
    train_idx = np.flatnonzero(mask)
    return SplitResult(dataset.take(train_idx), dataset.take(test_idx), seed)


def partition_by_label(dataset: LabeledDataset) -> tuple[LabeledDataset, LabeledDataset]:
    """Split into (benign, malicious) keeping source order; ``row_ids`` index the source."""
    benign = np.flatnonzero(dataset.y == 0)
    malicious = np.flatnonzero(dataset.y == 1)
    return dataset.take(benign), dataset.take(malicious)
