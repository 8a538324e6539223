"""Scikit-learn-style facades over the query engines and the cleaning loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import cleaning, engine
from .dataset import IncompleteDataset
from .validation import check_dataset_payload, check_engine, check_k, check_kernel, check_points


def _as_dataset(data) -> IncompleteDataset:
    if isinstance(data, IncompleteDataset):
        return data
    if isinstance(data, dict):
        return check_dataset_payload(data)
    raise TypeError("expected an IncompleteDataset or its JSON payload")


class CertainKNN(BaseEstimator):
    """K-NN over an incomplete training set, queried under possible-world
    semantics.

    `fit` ingests the incomplete dataset; prediction-side methods answer the
    counting query (`count_worlds`), the checking query (`certain_labels`),
    and a conventional `predict` that returns the label supported by the
    most worlds.
    """

    def __init__(self, k: int = 3, kernel: str = "negative_euclidean",
                 engine: str = "ss-dc", mode: str = "exact"):
        self.k = k
        self.kernel = kernel
        self.engine = engine
        self.mode = mode

    def fit(self, X, y=None):
        dataset = _as_dataset(X)
        check_k(self.k, len(dataset.rows))
        check_kernel(self.kernel)
        check_engine(self.engine, allow_q1=False)
        self.dataset_ = dataset
        self.n_features_in_ = dataset.dimension
        return self

    def _check_points(self, X):
        return check_points(X, self.dataset_.dimension, "X")

    def count_worlds(self, X) -> list[engine.Q2Answer]:
        """Q2 per test point."""
        return [engine.q2(self.dataset_, t, self.k, self.kernel, self.mode, self.engine)
                for t in self._check_points(X)]

    def certain_labels(self, X) -> np.ndarray:
        """Q1 per test point: a boolean (n, num_labels) matrix."""
        flags = [engine.q1(self.dataset_, t, self.k, self.kernel)
                 for t in self._check_points(X)]
        return np.asarray(flags, dtype=bool)

    def predict(self, X) -> np.ndarray:
        """Most-supported label per point (the certain label when one exists)."""
        out = []
        for t in self._check_points(X):
            answer = engine.q2(self.dataset_, t, self.k, self.kernel, self.mode, self.engine)
            fracs = answer.fractions()
            out.append(int(np.argmax(fracs)))
        return np.asarray(out, dtype=int)

    def prediction_entropy(self, X) -> np.ndarray:
        """Bits of uncertainty in the world-level vote per point."""
        return np.asarray([cleaning.prediction_entropy(a) for a in self.count_worlds(X)])


class CPCleaner(BaseEstimator):
    """Runs the entropy-guided cleaning loop as an estimator.

    `fit(dataset, val=..., oracle=...)` consumes an incomplete dataset, an
    array of validation feature vectors, and an oracle callable
    `(row_index, candidate_set) -> candidate index`; afterwards
    `dataset_`, `strategy_`, and `result_` hold the cleaned state.
    """

    def __init__(self, k: int = 3, kernel: str = "negative_euclidean",
                 engine: str = "ss-dc", budget: int | None = None,
                 with_entropy: bool = True):
        self.k = k
        self.kernel = kernel
        self.engine = engine
        self.budget = budget
        self.with_entropy = with_entropy

    def fit(self, X, y=None, *, val, oracle):
        dataset = _as_dataset(X)
        check_k(self.k, len(dataset.rows))
        check_kernel(self.kernel)
        check_engine(self.engine, allow_q1=False)
        points = check_points(val, dataset.dimension, "val")
        result = cleaning.cpclean_run(dataset, points, oracle, self.k, self.kernel,
                                      self.engine, self.budget, self.with_entropy)
        self.result_ = result
        self.dataset_ = result.dataset
        self.strategy_ = result.strategy
        self.converged_ = result.converged
        return self
