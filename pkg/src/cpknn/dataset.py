"""Tabular ingestion, candidate-repair generation, and MNAR missingness.

A `RawTable` holds parsed cells with explicit missing markers; encoding
turns rows into numeric feature vectors; `generate_candidates` expands every
dirty row into the candidate set that defines the possible-world space.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .knn import accuracy

NUMERIC = "numeric"
CATEGORICAL = "categorical"
DUMMY_CATEGORY = "__other__"


class TableError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str  # numeric | categorical


@dataclass(frozen=True)
class TableSchema:
    columns: tuple[ColumnSchema, ...]
    label: str
    missing_marker: str = ""

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise TableError("duplicate column names")
        if self.label not in names:
            raise TableError(f"label column {self.label!r} not in schema")
        for c in self.columns:
            if c.kind not in (NUMERIC, CATEGORICAL):
                raise TableError(f"unknown column kind {c.kind!r}")

    @property
    def label_index(self) -> int:
        return [c.name for c in self.columns].index(self.label)

    @property
    def feature_columns(self) -> list[ColumnSchema]:
        return [c for c in self.columns if c.name != self.label]

    @property
    def feature_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.columns) if c.name != self.label]

    def to_json(self) -> dict:
        return {"columns": [{"name": c.name, "kind": c.kind} for c in self.columns],
                "label": self.label, "missing_marker": self.missing_marker}

    @classmethod
    def from_json(cls, obj: dict) -> "TableSchema":
        cols = tuple(ColumnSchema(c["name"], c["kind"]) for c in obj["columns"])
        return cls(cols, obj["label"], obj.get("missing_marker", ""))

    @classmethod
    def load(cls, path) -> "TableSchema":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class RawTable:
    """Parsed rows; a missing cell is None.  The label cell never is."""

    schema: TableSchema
    rows: list[list]

    def __post_init__(self):
        width = len(self.schema.columns)
        li = self.schema.label_index
        for r, row in enumerate(self.rows):
            if len(row) != width:
                raise TableError(f"row {r}: expected {width} cells, got {len(row)}")
            if row[li] is None:
                raise TableError(f"row {r}: label missing")

    def __len__(self) -> int:
        return len(self.rows)

    def labels(self) -> list:
        li = self.schema.label_index
        return [row[li] for row in self.rows]

    def missing_cells(self) -> list[tuple[int, int]]:
        return [(r, c) for r, row in enumerate(self.rows)
                for c, cell in enumerate(row) if cell is None]

    def dirty_row_indices(self) -> list[int]:
        return sorted({r for r, _ in self.missing_cells()})

    def subset(self, indices) -> "RawTable":
        return RawTable(self.schema, [list(self.rows[i]) for i in indices])


def _parse_cell(text: str, kind: str, marker: str, where: str):
    if text == marker:
        return None
    if kind == NUMERIC:
        try:
            value = float(text)
        except ValueError:
            raise TableError(f"{where}: cannot parse {text!r} as numeric") from None
        if not math.isfinite(value):
            raise TableError(f"{where}: non-finite numeric {text!r}")
        return value
    return text


def load_csv(path, schema: TableSchema) -> RawTable:
    """Read a UTF-8 CSV with a header row matching the schema order."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = [c.name for c in schema.columns]
        if header != expected:
            raise TableError(f"header {header} does not match schema columns {expected}")
        rows = []
        for r, record in enumerate(reader):
            if len(record) != len(expected):
                raise TableError(f"row {r}: expected {len(expected)} cells, got {len(record)}")
            parsed = []
            for c, (cell, col) in enumerate(zip(record, schema.columns)):
                parsed.append(_parse_cell(cell, col.kind, schema.missing_marker,
                                          f"row {r}, column {col.name}"))
            rows.append(parsed)
    return RawTable(schema, rows)


def save_csv(table: RawTable, path) -> None:
    """Inverse of `load_csv`: floats via repr so the round trip is exact."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in table.schema.columns])
        for row in table.rows:
            out = []
            for cell, col in zip(row, table.schema.columns):
                if cell is None:
                    out.append(table.schema.missing_marker)
                elif col.kind == NUMERIC:
                    out.append(repr(float(cell)))
                else:
                    out.append(cell)
            writer.writerow(out)


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------

class TableEncoder:
    """Fixed numeric encoding of a table.

    Categorical values get ordinal codes by descending frequency then
    lexical order; the dummy "other" category takes the next unused code.
    Labels are mapped to 0..|Y|-1 in sorted value order.
    """

    def __init__(self, schema: TableSchema):
        self.schema = schema
        self.category_codes: dict[str, dict] = {}
        self.label_codes: dict = {}

    def fit(self, table: RawTable) -> "TableEncoder":
        for idx, col in enumerate(self.schema.columns):
            if col.name == self.schema.label:
                continue
            if col.kind == CATEGORICAL:
                counts: dict = {}
                for row in table.rows:
                    v = row[idx]
                    if v is not None:
                        counts[v] = counts.get(v, 0) + 1
                ordered = sorted(counts, key=lambda v: (-counts[v], v))
                codes = {v: float(i) for i, v in enumerate(ordered)}
                codes[DUMMY_CATEGORY] = float(len(ordered))
                self.category_codes[col.name] = codes
        values = sorted(set(table.labels()))
        self.label_codes = {v: i for i, v in enumerate(values)}
        return self

    @property
    def num_labels(self) -> int:
        return len(self.label_codes)

    def encode_value(self, col: ColumnSchema, value) -> float:
        if col.kind == NUMERIC:
            return float(value)
        codes = self.category_codes[col.name]
        return codes.get(value, codes[DUMMY_CATEGORY])

    def encode_label(self, value) -> int:
        return self.label_codes[value]

    def encode_row(self, row: list) -> np.ndarray:
        cols = self.schema.columns
        out = [self.encode_value(cols[i], row[i]) for i in self.schema.feature_indices]
        return np.asarray(out, dtype=float)

    def encode_table(self, table: RawTable) -> tuple[np.ndarray, np.ndarray]:
        """Complete table to (X, y) arrays; raises on any missing cell."""
        if table.missing_cells():
            raise TableError("encode_table requires a complete table")
        X = np.asarray([self.encode_row(row) for row in table.rows], dtype=float)
        y = np.asarray([self.encode_label(v) for v in table.labels()], dtype=int)
        return X, y


# ---------------------------------------------------------------------------
# candidate repairs and the incomplete dataset
# ---------------------------------------------------------------------------

def _p25(v):
    return float(np.percentile(v, 25))


def _p75(v):
    return float(np.percentile(v, 75))


NUMERIC_STATS = {
    "min": lambda v: float(np.min(v)),
    "p25": _p25,
    "mean": lambda v: float(np.mean(v)),
    "p75": _p75,
    "max": lambda v: float(np.max(v)),
    "median": lambda v: float(np.median(v)),
}

DEFAULT_NUMERIC_REPAIRS = ("min", "p25", "mean", "p75", "max")


@dataclass(frozen=True)
class CandidatePolicy:
    """How missing cells expand into candidate repairs."""

    numeric_repairs: tuple[str, ...] = DEFAULT_NUMERIC_REPAIRS
    categorical_top_k: int = 4
    cap: int = 32

    def __post_init__(self):
        if not self.numeric_repairs:
            raise TableError("numeric_repairs must be nonempty")
        for name in self.numeric_repairs:
            if name not in NUMERIC_STATS:
                raise TableError(f"unknown numeric statistic {name!r}")
        if self.cap < 1:
            raise TableError("cap must be at least 1")


@dataclass
class CandidateSet:
    """Possible feature vectors for one row; size 1 means the row is clean."""

    candidates: np.ndarray  # (m, d)
    label: int
    display: list[str] | None = None

    def __post_init__(self):
        self.candidates = np.asarray(self.candidates, dtype=float)
        if self.candidates.ndim != 2 or self.candidates.shape[0] < 1:
            raise TableError("candidate set needs at least one candidate vector")

    @property
    def size(self) -> int:
        return self.candidates.shape[0]


@dataclass
class IncompleteDataset:
    rows: list[CandidateSet]
    num_labels: int
    dimension: int

    def __post_init__(self):
        if not self.rows:
            raise TableError("dataset needs at least one row")
        for r, row in enumerate(self.rows):
            if row.candidates.shape[1] != self.dimension:
                raise TableError(f"row {r}: dimension {row.candidates.shape[1]} != {self.dimension}")
            if not 0 <= row.label < self.num_labels:
                raise TableError(f"row {r}: label {row.label} out of range")

    def labels(self) -> list[int]:
        return [row.label for row in self.rows]

    def sizes(self) -> list[int]:
        return [row.size for row in self.rows]

    def world_count(self) -> int:
        return math.prod(self.sizes())

    def dirty_rows(self) -> list[int]:
        return [r for r, row in enumerate(self.rows) if row.size > 1]

    def collapsed(self, row_index: int, candidate_index: int) -> "IncompleteDataset":
        """A copy with one row pinned to a single candidate."""
        row = self.rows[row_index]
        if not 0 <= candidate_index < row.size:
            raise TableError(f"candidate {candidate_index} out of range for row {row_index}")
        pinned = CandidateSet(row.candidates[candidate_index:candidate_index + 1].copy(),
                              row.label,
                              [row.display[candidate_index]] if row.display else None)
        rows = list(self.rows)
        rows[row_index] = pinned
        return IncompleteDataset(rows, self.num_labels, self.dimension)

    def first_world(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray([row.candidates[0] for row in self.rows])
        return X, np.asarray(self.labels(), dtype=int)

    def to_json(self) -> dict:
        rows = []
        for row in self.rows:
            item = {"label": int(row.label),
                    "candidates": [[float(v) for v in c] for c in row.candidates]}
            if row.display is not None:
                item["display"] = list(row.display)
            rows.append(item)
        return {"num_labels": self.num_labels, "dimension": self.dimension, "rows": rows}

    @classmethod
    def from_json(cls, obj: dict) -> "IncompleteDataset":
        rows = [CandidateSet(np.asarray(r["candidates"], dtype=float), int(r["label"]),
                             r.get("display"))
                for r in obj["rows"]]
        return cls(rows, int(obj["num_labels"]), int(obj["dimension"]))


def column_repairs(table: RawTable, policy: CandidatePolicy) -> dict[int, list]:
    """Repair values per feature column, in raw value space."""
    repairs: dict[int, list] = {}
    for idx in table.schema.feature_indices:
        col = table.schema.columns[idx]
        values = [row[idx] for row in table.rows if row[idx] is not None]
        if not values:
            raise TableError(f"column {col.name!r} is entirely missing; no repairs computable")
        if col.kind == NUMERIC:
            arr = np.asarray(values, dtype=float)
            repairs[idx] = [NUMERIC_STATS[name](arr) for name in policy.numeric_repairs]
        else:
            counts: dict = {}
            for v in values:
                counts[v] = counts.get(v, 0) + 1
            ordered = sorted(counts, key=lambda v: (-counts[v], v))
            repairs[idx] = ordered[:policy.categorical_top_k] + [DUMMY_CATEGORY]
    return repairs


def _dedup(values: list) -> list:
    seen = []
    for v in values:
        if v not in seen:
            seen.append(v)
    return seen


def generate_candidates(table: RawTable, policy: CandidatePolicy | None = None,
                        encoder: TableEncoder | None = None) -> IncompleteDataset:
    """Expand each dirty row into the Cartesian product of its cell repairs.

    Clean rows become singletons.  Per-cell repair lists are deduplicated
    preserving first occurrence, and the product is truncated to
    `policy.cap` candidates in row-major order while streaming, so the
    full product is never materialized.
    """
    policy = policy or CandidatePolicy()
    encoder = encoder or TableEncoder(table.schema).fit(table)
    repairs = column_repairs(table, policy)
    cols = table.schema.columns
    feature_indices = table.schema.feature_indices

    rows = []
    for row in table.rows:
        options = []
        missing_cols = [i for i in feature_indices if row[i] is None]
        for idx in feature_indices:
            if row[idx] is None:
                options.append(_dedup(repairs[idx]))
            else:
                options.append([row[idx]])
        vectors, displays = [], []
        for combo in itertools.islice(itertools.product(*options), policy.cap):
            vec = [encoder.encode_value(cols[i], v) for i, v in zip(feature_indices, combo)]
            vectors.append(vec)
            if missing_cols:
                fills = {i: v for i, v in zip(feature_indices, combo)}
                displays.append("; ".join(f"{cols[i].name}={fills[i]}" for i in missing_cols))
        label = encoder.encode_label(row[table.schema.label_index])
        rows.append(CandidateSet(np.asarray(vectors, dtype=float), label,
                                 displays if missing_cols else None))
    return IncompleteDataset(rows, encoder.num_labels, len(feature_indices))


# ---------------------------------------------------------------------------
# missingness injection, importance, splitting
# ---------------------------------------------------------------------------

def inject_missing(table: RawTable, rate: float, importances, seed: int,
                   cell_level: bool = False) -> RawTable:
    """MNAR injection: exactly floor(rate*N) rows get missing cells, and the
    missing feature within a row is drawn proportionally to `importances`.

    With `cell_level` each feature cell of an affected row goes missing
    independently with probability importances/sum, with one guaranteed
    draw; by default every affected row loses exactly one cell.
    """
    if not 0.0 < rate < 1.0:
        raise TableError(f"rate must lie in (0, 1), got {rate}")
    feature_indices = table.schema.feature_indices
    imp = np.asarray(importances, dtype=float)
    if imp.shape != (len(feature_indices),):
        raise TableError(f"expected {len(feature_indices)} importances, got {imp.shape}")
    if (imp < 0).any() or imp.sum() <= 0:
        raise TableError("importances must be nonnegative with a positive sum")
    probs = imp / imp.sum()

    rng = np.random.default_rng(seed)
    n_affected = int(rate * len(table.rows))
    affected = rng.choice(len(table.rows), size=n_affected, replace=False)
    rows = [list(r) for r in table.rows]
    for r in affected:
        if cell_level:
            hits = np.flatnonzero(rng.random(len(feature_indices)) < probs)
            if hits.size == 0:
                hits = [rng.choice(len(feature_indices), p=probs)]
            for h in hits:
                rows[r][feature_indices[h]] = None
        else:
            f = rng.choice(len(feature_indices), p=probs)
            rows[r][feature_indices[f]] = None
    return RawTable(table.schema, rows)


def feature_importance(train, val, k: int = 3, kernel: str = "negative_euclidean") -> np.ndarray:
    """Per-feature accuracy loss when the feature is dropped, clipped at 0."""
    X, y = np.asarray(train[0], dtype=float), np.asarray(train[1], dtype=int)
    Xv, yv = np.asarray(val[0], dtype=float), np.asarray(val[1], dtype=int)
    d = X.shape[1]
    if d < 2:
        raise TableError("feature importance needs at least 2 features")
    base = accuracy((X, y), (Xv, yv), k, kernel)
    out = np.zeros(d)
    for f in range(d):
        acc = accuracy((np.delete(X, f, axis=1), y), (np.delete(Xv, f, axis=1), yv), k, kernel)
        out[f] = max(0.0, base - acc)
    return out


def split(table: RawTable, val_size: int, test_size: int, seed: int
          ) -> tuple[RawTable, RawTable, RawTable]:
    """Deterministic shuffle split into (train, val, test)."""
    n = len(table.rows)
    if val_size + test_size >= n and not (val_size == 0 and test_size == 0):
        raise TableError(f"val_size + test_size = {val_size + test_size} must be < {n}")
    perm = np.random.default_rng(seed).permutation(n)
    val_idx = perm[:val_size]
    test_idx = perm[val_size:val_size + test_size]
    train_idx = perm[val_size + test_size:]
    return table.subset(train_idx), table.subset(val_idx), table.subset(test_idx)
