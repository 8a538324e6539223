"""Similarity kernels and deterministic K-nearest-neighbor prediction.

Every other component (query engines, brute-force oracle, cleaning loop)
routes its per-world predictions through :func:`knn_predict`, so the
tie-breaking rules defined here are the single source of truth.
"""

from __future__ import annotations

import numpy as np

KERNELS = ("negative_euclidean",)
DEFAULT_K = 3


class DimensionMismatch(ValueError):
    pass


def _check_kernel(kernel: str) -> None:
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def similarity(x, t, kernel: str = "negative_euclidean") -> float:
    """Similarity between vectors `x` and `t`; larger means more similar.

    `negative_euclidean` returns -||x - t||_2.
    """
    _check_kernel(kernel)
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if x.shape != t.shape:
        raise DimensionMismatch(f"dimension mismatch: {x.shape} vs {t.shape}")
    return -float(np.linalg.norm(x - t))


def similarity_matrix(points: np.ndarray, t, kernel: str = "negative_euclidean") -> np.ndarray:
    """Row-wise similarity of an (n, d) array against a single point."""
    _check_kernel(kernel)
    points = np.asarray(points, dtype=float)
    t = np.asarray(t, dtype=float)
    if points.ndim != 2 or points.shape[1] != t.shape[0]:
        raise DimensionMismatch(f"dimension mismatch: {points.shape} vs {t.shape}")
    return -np.linalg.norm(points - t[None, :], axis=1)


def top_k_rows(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k most-similar rows, equal scores won by the smaller index."""
    n = scores.shape[0]
    # lexsort: primary key last.  Descending score, then ascending row index.
    order = np.lexsort((np.arange(n), -scores))
    return order[:k]


def vote(labels: np.ndarray, num_labels: int | None = None) -> int:
    """Majority label; ties go to the smallest label id."""
    counts = np.bincount(labels, minlength=num_labels or 0)
    return int(np.argmax(counts))


def knn_predict(world, t, k: int = DEFAULT_K, kernel: str = "negative_euclidean") -> int:
    """Prediction of a K-NN classifier trained on a complete world.

    `world` is a sequence of (vector, label) pairs or an (X, y) tuple of
    arrays.  The top-k set is chosen by descending similarity with equal
    scores won by the smaller row index; the vote tie goes to the smallest
    label id.  This exact rule is shared by the query engines and the
    brute-force oracle.
    """
    X, y = as_world_arrays(world)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty world")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for world of size {n}")
    scores = similarity_matrix(X, t, kernel)
    top = top_k_rows(scores, k)
    return vote(y[top])


def accuracy(world, labeled, k: int = DEFAULT_K, kernel: str = "negative_euclidean") -> float:
    """Mean zero-one accuracy of knn_predict over a labeled evaluation set."""
    Xe, ye = as_world_arrays(labeled)
    if Xe.shape[0] == 0:
        raise ValueError("empty evaluation set")
    X, y = as_world_arrays(world)
    hits = sum(1 for t, lab in zip(Xe, ye) if knn_predict((X, y), t, k, kernel) == lab)
    return hits / Xe.shape[0]


def as_world_arrays(world) -> tuple[np.ndarray, np.ndarray]:
    """Normalize a world given as (X, y) arrays or a list of (vector, label)."""
    if isinstance(world, tuple) and len(world) == 2:
        X, y = world
        return np.asarray(X, dtype=float), np.asarray(y, dtype=int)
    X = np.asarray([v for v, _ in world], dtype=float)
    y = np.asarray([lab for _, lab in world], dtype=int)
    return X, y
