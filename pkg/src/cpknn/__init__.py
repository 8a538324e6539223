"""Certain prediction for K-NN over incomplete data, with prioritized cleaning."""

from .dataset import (
    CandidatePolicy,
    CandidateSet,
    ColumnSchema,
    IncompleteDataset,
    RawTable,
    TableEncoder,
    TableSchema,
    feature_importance,
    generate_candidates,
    inject_missing,
    load_csv,
    save_csv,
    split,
)
from .engine import (
    BruteForceLimitExceeded,
    Q2Answer,
    brute_force,
    q1,
    q1_mm,
    q1_via_q2,
    q2,
    q2_ss,
    q2_ss_dc,
    q2_ss_dc_mc,
)
from .knn import accuracy, knn_predict, similarity

__version__ = "0.1.0"

__all__ = [
    "CandidatePolicy", "CandidateSet", "ColumnSchema", "IncompleteDataset",
    "RawTable", "TableEncoder", "TableSchema", "feature_importance",
    "generate_candidates", "inject_missing", "load_csv", "save_csv", "split",
    "BruteForceLimitExceeded", "Q2Answer", "brute_force", "q1", "q1_mm",
    "q1_via_q2", "q2", "q2_ss", "q2_ss_dc", "q2_ss_dc_mc",
    "accuracy", "knn_predict", "similarity", "__version__",
]
