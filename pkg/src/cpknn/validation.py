"""Input validation helpers shared by the estimators, CLI, and HTTP API.

Errors carry a `field` path so API handlers can surface the offending
location in payloads.
"""

from __future__ import annotations

import numpy as np

from .dataset import CandidateSet, IncompleteDataset
from .engine import Q2_ENGINES
from .knn import KERNELS


class FieldError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.reason = message


def check_dataset_payload(obj) -> IncompleteDataset:
    """Parse and validate an incomplete-dataset JSON payload."""
    if not isinstance(obj, dict):
        raise FieldError("dataset", "expected an object")
    for key in ("num_labels", "dimension", "rows"):
        if key not in obj:
            raise FieldError(f"dataset.{key}", "missing")
    num_labels, dimension = obj["num_labels"], obj["dimension"]
    if not isinstance(num_labels, int) or num_labels < 1:
        raise FieldError("dataset.num_labels", "must be a positive integer")
    if not isinstance(dimension, int) or dimension < 1:
        raise FieldError("dataset.dimension", "must be a positive integer")
    if not isinstance(obj["rows"], list) or not obj["rows"]:
        raise FieldError("dataset.rows", "must be a nonempty list")
    rows = []
    for r, item in enumerate(obj["rows"]):
        where = f"dataset.rows[{r}]"
        if not isinstance(item, dict) or "label" not in item or "candidates" not in item:
            raise FieldError(where, "expected an object with label and candidates")
        label = item["label"]
        if not isinstance(label, int) or not 0 <= label < num_labels:
            raise FieldError(f"{where}.label", f"must be an integer in [0, {num_labels})")
        cands = item["candidates"]
        if not isinstance(cands, list) or not cands:
            raise FieldError(f"{where}.candidates", "must be a nonempty list of vectors")
        try:
            arr = np.asarray(cands, dtype=float)
        except (TypeError, ValueError):
            raise FieldError(f"{where}.candidates", "must be numeric vectors") from None
        if arr.ndim != 2 or arr.shape[1] != dimension:
            raise FieldError(f"{where}.candidates",
                             f"expected shape (*, {dimension}), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise FieldError(f"{where}.candidates", "entries must be finite")
        display = item.get("display")
        if display is not None and (not isinstance(display, list)
                                    or len(display) != arr.shape[0]):
            raise FieldError(f"{where}.display", "must match the number of candidates")
        rows.append(CandidateSet(arr, label, display))
    return IncompleteDataset(rows, num_labels, dimension)


def check_points(obj, dimension: int, field: str = "val") -> np.ndarray:
    """Validate a list of feature vectors into an (n, d) float array."""
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise FieldError(field, "must be a list of numeric vectors") from None
    if arr.ndim == 1 and arr.size == 0:
        return arr.reshape(0, dimension)
    if arr.ndim != 2 or arr.shape[1] != dimension:
        raise FieldError(field, f"expected shape (*, {dimension}), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise FieldError(field, "entries must be finite")
    return arr


def check_engine(name: str, field: str = "engine", allow_q1: bool = True) -> str:
    valid = Q2_ENGINES + ("brute",) + (("mm", "auto") if allow_q1 else ())
    if name not in valid:
        raise FieldError(field, f"unknown engine {name!r}; expected one of {sorted(valid)}")
    return name


def check_kernel(name: str, field: str = "kernel") -> str:
    if name not in KERNELS:
        raise FieldError(field, f"unknown kernel {name!r}; expected one of {KERNELS}")
    return name


def check_k(k, n_rows: int, field: str = "k") -> int:
    if not isinstance(k, int) or not 1 <= k <= n_rows:
        raise FieldError(field, f"must be an integer in [1, {n_rows}]")
    return k
