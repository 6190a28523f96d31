"""Flow-record ingestion, cleaning, scaling and stratified partitioning."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

KINDS = ("continuous", "discrete", "label", "dropped")
BENIGN = "benign"


class SchemaError(ValueError):
    """Raised when column layout or label column is invalid."""


class DataError(ValueError):
    """Raised when the data itself cannot satisfy an operation."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown column kind {self.kind!r}")
        if self.name.strip().lower() == "timestamp" and self.kind != "dropped":
            raise SchemaError("timestamp column must be dropped")


def auto_schema(header: Sequence[str], label_column: str = "Label") -> list[ColumnSchema]:
    """Label column -> label, timestamp -> dropped, everything else continuous."""
    if label_column not in header:
        raise SchemaError(f"label column {label_column!r} not in header")
    schema = []
    for name in header:
        if name == label_column:
            kind = "label"
        elif name.strip().lower() == "timestamp":
            kind = "dropped"
        else:
            kind = "continuous"
        schema.append(ColumnSchema(name, kind))
    return schema


def validate_schema(schema: Sequence[ColumnSchema]) -> None:
    n_label = sum(c.kind == "label" for c in schema)
    if n_label != 1:
        raise SchemaError(f"schema needs exactly one label column, got {n_label}")
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate column names in schema")


@dataclass(frozen=True)
class RawTable:
    header: tuple[str, ...]
    rows: list[tuple[str, ...]]
    schema: tuple[ColumnSchema, ...]

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    schema: tuple[ColumnSchema, ...] = ()

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 2:
            features = features.reshape(len(features), -1)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if not self.schema:
            cols = [ColumnSchema(f"f{j}", "continuous") for j in range(features.shape[1])]
            object.__setattr__(self, "schema", tuple(cols + [ColumnSchema("Label", "label")]))
        else:
            object.__setattr__(self, "schema", tuple(self.schema))
        if features.shape[0] != labels.shape[0]:
            raise DataError("feature rows and label count differ")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise DataError("label id outside class_names")
        if features.shape[1] != len(self.feature_names):
            raise SchemaError("feature width does not match schema")
        features.flags.writeable = False
        labels.flags.writeable = False

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.schema if c.kind in ("continuous", "discrete")]

    @property
    def label_name(self) -> str:
        return next(c.name for c in self.schema if c.kind == "label")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def __len__(self):
        return self.labels.shape[0]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, index) -> "Dataset":
        return replace(self, features=self.features[index], labels=self.labels[index])

    def with_rows(self, features, labels) -> "Dataset":
        return replace(self, features=features, labels=labels)

    def concat(self, other: "Dataset") -> "Dataset":
        if other.class_names != self.class_names:
            raise DataError("cannot concatenate datasets with different classes")
        return replace(
            self,
            features=np.vstack([self.features, other.features]),
            labels=np.concatenate([self.labels, other.labels]),
        )

    def equals(self, other: "Dataset") -> bool:
        return (
            self.class_names == other.class_names
            and self.schema == other.schema
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    def to_raw(self) -> RawTable:
        """Back to text cells, so the result can be fed to clean() again."""
        header = tuple(self.feature_names) + (self.label_name,)
        rows = [
            tuple(repr(float(v)) for v in feats) + (self.class_names[lab],)
            for feats, lab in zip(self.features, self.labels)
        ]
        schema = tuple(c for c in self.schema if c.kind != "dropped")
        return RawTable(header, rows, schema)


def load_csv(paths, schema=None, label_column: str = "Label") -> RawTable:
    """Read one or more CSV files sharing an identical header row."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    header = None
    rows: list[tuple[str, ...]] = []
    for path in paths:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"no such file: {path}")
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                this_header = tuple(h.strip() for h in next(reader))
            except StopIteration:
                raise SchemaError(f"{path} is empty") from None
            if header is None:
                header = this_header
            elif this_header != header:
                raise SchemaError(f"header of {path} differs from the first file")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
                rows.append(tuple(row))
    if header is None:
        raise DataError("no input files")
    if schema is None or schema == "auto":
        schema = auto_schema(header, label_column)
    else:
        schema = list(schema)
        if [c.name for c in schema] != list(header):
            raise SchemaError("schema columns do not match CSV header")
    validate_schema(schema)
    return RawTable(header, rows, tuple(schema))


def _parse_float(cell: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        return math.nan
    return v


def clean(raw: RawTable) -> Dataset:
    """Drop timestamp/dropped columns and non-finite rows; integer-encode labels.

    Benign (case-insensitive) is always class 0; the other classes follow in
    order of first appearance among the surviving rows.
    """
    if len(raw) == 0:
        raise DataError("empty table")
    validate_schema(raw.schema)
    label_idx = [i for i, c in enumerate(raw.schema) if c.kind == "label"][0]
    feat_idx = [i for i, c in enumerate(raw.schema) if c.kind in ("continuous", "discrete")]

    values = np.array(
        [[_parse_float(row[i]) for i in feat_idx] for row in raw.rows], dtype=np.float64
    ).reshape(len(raw), len(feat_idx))
    keep = np.isfinite(values).all(axis=1)
    label_text = [row[label_idx].strip() for row in raw.rows]
    keep &= np.array([bool(t) for t in label_text])
    if not keep.any():
        raise DataError("cleaning removed every row")

    kept_labels = [t for t, k in zip(label_text, keep) if k]
    names: list[str] = []
    benign = [t for t in kept_labels if t.lower() == BENIGN]
    if benign:
        names.append(benign[0])
    for t in kept_labels:
        if t.lower() == BENIGN:
            continue
        if t not in names:
            names.append(t)
    lookup = {n: i for i, n in enumerate(names)}
    labels = np.array(
        [0 if (t.lower() == BENIGN and benign) else lookup[t] for t in kept_labels], dtype=np.int64
    )
    schema = tuple(c for c in raw.schema if c.kind != "dropped")
    return Dataset(values[keep], labels, tuple(names), schema)


@dataclass(frozen=True, eq=False)
class MinMaxScaler:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        if np.any(self.min > self.max):
            raise ValueError("scaler min exceeds max")

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.min.shape[0]:
            raise SchemaError(f"scaler expects {self.min.shape[0]} features, got {x.shape[-1]}")
        span = self.max - self.min
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, (x - self.min) / safe, 0.0)
        return np.clip(out, 0.0, 1.0)

    def inverse_transform(self, x: np.ndarray) -> np.ndarray:
        return self.min + np.asarray(x, dtype=np.float64) * (self.max - self.min)

    def to_dict(self) -> dict:
        return {"min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        return cls(np.asarray(d["min"], dtype=np.float64), np.asarray(d["max"], dtype=np.float64))


def fit_scaler(train: Dataset) -> MinMaxScaler:
    if len(train) == 0:
        raise DataError("cannot fit a scaler on an empty dataset")
    return MinMaxScaler(train.features.min(axis=0), train.features.max(axis=0))


def apply_scaler(scaler: MinMaxScaler, data: Dataset) -> Dataset:
    return data.with_rows(scaler.transform(data.features), data.labels)


def _check_class_sizes(labels: np.ndarray, minimum: int, what: str) -> None:
    counts = np.bincount(labels)
    present = counts[counts > 0]
    if present.size and present.min() < minimum:
        small = int(np.flatnonzero((counts > 0) & (counts < minimum))[0])
        raise DataError(f"class {small} has {counts[small]} samples; {what} needs {minimum}")


def _largest_remainder(exact: np.ndarray, total: int) -> np.ndarray:
    base = np.floor(exact).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        order = np.argsort(-(exact - base), kind="stable")
        base[order[:short]] += 1
    return base


def stratified_split_indices(labels: np.ndarray, train_fraction: float, seed: int):
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    labels = np.asarray(labels)
    _check_class_sizes(labels, 2, "a stratified split")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_train = int(round(train_fraction * idx.size))
        n_train = min(max(n_train, 1), idx.size - 1)
        train_idx.append(idx[:n_train])
        test_idx.append(idx[n_train:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def stratified_split(data: Dataset, train_fraction: float = 0.7, seed: int = 0):
    """Per-class shuffled split; each class keeps round(fraction * n_c) rows for training."""
    tr, te = stratified_split_indices(data.labels, train_fraction, seed)
    return data.subset(tr), data.subset(te)


def stratified_kfold(data, k: int = 5, seed: int = 0):
    """Return k (train_index, validation_index) pairs.

    Rows of each class are shuffled and dealt round-robin across folds, with the
    starting fold rotated so fold sizes stay balanced overall.
    """
    labels = data.labels if isinstance(data, Dataset) else np.asarray(data)
    if k < 2:
        raise ValueError("k must be at least 2")
    _check_class_sizes(labels, k, f"{k}-fold CV")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(labels.shape[0], dtype=np.int64)
    offset = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = (np.arange(idx.size) + offset) % k
        offset = (offset + idx.size) % k
    all_idx = np.arange(labels.shape[0])
    return [(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(k)]


# -- snapshots ---------------------------------------------------------------

def save_dataset(data: Dataset, stem, scaler: MinMaxScaler | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (features + label id) and ``<stem>.json`` (metadata)."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path, meta_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.feature_names + ["label_id"])
        for feats, lab in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in feats] + [int(lab)])
    meta = {
        "class_names": list(data.class_names),
        "schema": [{"name": c.name, "kind": c.kind} for c in data.schema],
        "scaler": scaler.to_dict() if scaler is not None else None,
        "rows": len(data),
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, meta_path


def load_dataset(stem) -> tuple[Dataset, MinMaxScaler | None]:
    stem = Path(stem)
    if stem.suffix in (".csv", ".json"):
        stem = stem.with_suffix("")
    meta = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    schema = tuple(ColumnSchema(c["name"], c["kind"]) for c in meta["schema"])
    width = sum(c.kind in ("continuous", "discrete") for c in schema)
    with stem.with_suffix(".csv").open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [r for r in reader if r]
    arr = np.array([[float(v) for v in r] for r in rows], dtype=np.float64).reshape(len(rows), width + 1)
    scaler = MinMaxScaler.from_dict(meta["scaler"]) if meta.get("scaler") else None
    data = Dataset(arr[:, :width], arr[:, width].astype(np.int64), tuple(meta["class_names"]), schema)
    return data, scaler
