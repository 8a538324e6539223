import random

import numpy as np
import pytest

from cpknn import CandidateSet, IncompleteDataset


@pytest.fixture
def worked_example():
    """1-D instance realizing the worked example's similarity ordering.

    With t = 0 the ascending-similarity scan visits (row, cand) pairs in the
    order (1,0), (0,0), (1,1), (2,0), (0,1), (2,1); rows 0 and 1 carry label
    1, row 2 label 0.  K=1 world counts are [6, 2].
    """
    rows = [
        CandidateSet(np.array([[0.5], [0.2]]), 1),
        CandidateSet(np.array([[0.6], [0.4]]), 1),
        CandidateSet(np.array([[0.3], [0.1]]), 0),
    ]
    return IncompleteDataset(rows, 2, 1), np.array([0.0])


def random_instance(rng: random.Random, max_rows=7, max_cands=3, max_labels=4,
                    grid=None, dims=(1, 3)):
    """Small random incomplete dataset plus a test point.

    Drawing coordinates from a coarse grid (the default) produces plenty of
    similarity ties, which is exactly where the tie-order rules earn their
    keep.
    """
    grid = grid or [0.0, 1.0, 2.0]
    n = rng.randint(1, max_rows)
    num_labels = rng.randint(1, max_labels)
    d = rng.randint(*dims)
    rows = []
    for _ in range(n):
        m = rng.randint(1, max_cands)
        cands, seen = [], set()
        for _ in range(m):
            v = tuple(rng.choice(grid) for _ in range(d))
            if v not in seen:
                seen.add(v)
                cands.append(list(v))
        rows.append(CandidateSet(np.array(cands), rng.randrange(num_labels)))
    dataset = IncompleteDataset(rows, num_labels, d)
    t = np.array([rng.choice(grid) for _ in range(d)])
    return dataset, t
