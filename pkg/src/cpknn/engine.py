"""Certain-prediction query engines over incomplete datasets.

Answers the checking query (which labels win in *every* possible world) and
the counting query (how many worlds each label wins) for a K-NN classifier
without enumerating the exponentially many worlds.  Four engines share one
deterministic similarity order:

* ``ss``        sorted scan with a flat per-label counting DP per pivot
* ``ss-dc``     same scan, DP maintained in per-label segment trees
* ``ss-dc-mc``  segment trees plus a per-label knapsack that stays
                polynomial in the number of classes
* ``mm``        extreme-world check, binary labels, checking query only

`brute_force` enumerates worlds outright and certifies the others in tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dataset import IncompleteDataset
from .knn import knn_predict, similarity_matrix, vote

EXACT = "exact"
NORMALIZED = "normalized"
Q2_ENGINES = ("ss", "ss-dc", "ss-dc-mc")
BRUTE_FORCE_LIMIT = 2_000_000


class BruteForceLimitExceeded(RuntimeError):
    """The instance has more possible worlds than the enumeration limit."""


class BinaryLabelsRequired(ValueError):
    """MM is proved for two labels only; multiclass Q1 must go through Q2."""


# ---------------------------------------------------------------------------
# similarity table and scan order
# ---------------------------------------------------------------------------

@dataclass
class SimilarityTable:
    """Per-candidate similarity scores, shaped like the dataset."""

    scores: list[np.ndarray]

    @property
    def sizes(self) -> list[int]:
        return [len(s) for s in self.scores]


def similarity_table(dataset: IncompleteDataset, t, kernel: str = "negative_euclidean") -> SimilarityTable:
    t = np.asarray(t, dtype=float)
    return SimilarityTable([similarity_matrix(row.candidates, t, kernel) for row in dataset.rows])


def scan_order(table: SimilarityTable) -> list[tuple[int, int]]:
    """All (row, candidate) pivots from least to most similar.

    Equal scores are ordered so that the smaller (row, candidate) pair is
    the *more* similar one, matching the tie rule of `knn_predict`; it
    therefore appears later in the scan.
    """
    pivots = [(i, j) for i, s in enumerate(table.scores) for j in range(len(s))]
    pivots.sort(key=lambda p: (table.scores[p[0]][p[1]], -p[0], -p[1]))
    return pivots


def initial_tally(n: int) -> list[int]:
    return [0] * n


def tally_advance(alpha: list[int], pivot: tuple[int, int]) -> list[int]:
    """Advance the similarity tally from the previous pivot to `pivot`.

    Only the entry of the pivot's own row grows, by one: the pivot candidate
    itself is the single new element that is now counted as "no more
    similar".  O(1); mutates and returns `alpha`.
    """
    alpha[pivot[0]] += 1
    return alpha


# ---------------------------------------------------------------------------
# counting building blocks
# ---------------------------------------------------------------------------

def boundary_count(pivot_row: int, alpha: list[int], sizes: list[int], k: int):
    """Worlds in which the pivot candidate sits exactly at rank k.

    Direct enumeration over all (k-1)-subsets of rows placed above the
    pivot.  Exponential in k; this is the secondary oracle for the DP, not
    a hot-path routine.
    """
    n = len(alpha)
    if k > n:
        raise ValueError(f"k={k} exceeds {n} rows")
    others = [r for r in range(n) if r != pivot_row]
    total = 0
    for above in itertools.combinations(others, k - 1):
        above_set = set(above)
        prod = 1
        for r in others:
            prod *= (sizes[r] - alpha[r]) if r in above_set else alpha[r]
        total += prod
    return total


def label_support_dp(pivot_row, alpha, sizes, labels, label, k, normalized=False):
    """Counts `C_label(c, N)` for c in 0..k at the current pivot.

    `C_label(c, N)` is the number of ways rows carrying `label` can place
    exactly c members above the pivot (the pivot row itself, when it has
    this label, always consumes one slot).  Rows with other labels are
    skipped; the pivot-row test comes second, so a pivot never enters a
    foreign label's DP.  In normalized mode every row's factors are scaled
    by its candidate count, turning counts into world fractions.
    """
    zero, one = (0.0, 1.0) if normalized else (0, 1)
    dp = [one] + [zero] * k
    for n, lab in enumerate(labels):
        if lab != label:
            continue
        if n == pivot_row:
            weight = 1.0 / sizes[n] if normalized else 1
            dp = [zero] + [dp[c - 1] * weight for c in range(1, k + 1)]
        else:
            below = alpha[n] / sizes[n] if normalized else alpha[n]
            above = 1.0 - below if normalized else sizes[n] - alpha[n]
            new = [dp[0] * below]
            for c in range(1, k + 1):
                new.append(dp[c] * below + dp[c - 1] * above)
            dp = new
    return dp


def support(pivot_row: int, gamma: tuple[int, ...], dps: list[list], labels: list[int]):
    """Worlds in the pivot's boundary set whose top-k label tally is `gamma`."""
    if gamma[labels[pivot_row]] < 1:
        return 0
    prod = dps[0][gamma[0]]
    for l in range(1, len(gamma)):
        prod = prod * dps[l][gamma[l]]
    return prod


def compositions(total: int, parts: int):
    """All nonnegative integer vectors of length `parts` summing to `total`,
    in lexicographic order."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in compositions(total - head, parts - 1):
            yield (head,) + rest


def _tally_winner(gamma: tuple[int, ...]) -> int:
    return gamma.index(max(gamma))  # first max = smallest label id


# ---------------------------------------------------------------------------
# answers
# ---------------------------------------------------------------------------

@dataclass
class Q2Answer:
    """Per-label possible-world counts.

    Exact mode carries arbitrary-precision integers and
    ``total_worlds == prod |C_i|``; normalized mode carries world fractions
    whose sum is 1 up to float rounding, with ``total_worlds == 1.0``.
    """

    per_label: list
    total_worlds: int | float
    mode: str

    def fractions(self) -> list[float]:
        if self.mode == EXACT:
            return [c / self.total_worlds for c in self.per_label]
        s = sum(self.per_label)
        return [c / s for c in self.per_label]


def q1_via_q2(q2: Q2Answer, tolerance: float | None = None) -> list[bool]:
    """Per-label certain-prediction booleans derived from counts.

    Exact mode compares integers; normalized mode requires an explicit
    tolerance because float counts cannot witness exact equality.
    """
    if q2.mode == EXACT:
        return [c == q2.total_worlds for c in q2.per_label]
    if tolerance is None:
        raise ValueError("normalized counts need an explicit tolerance for Q1")
    return [abs(c - q2.total_worlds) <= tolerance for c in q2.per_label]


def _validate_query(dataset: IncompleteDataset, k: int) -> None:
    n = len(dataset.rows)
    if n == 0:
        raise ValueError("empty dataset")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} rows")


def _unanimous_answer(dataset: IncompleteDataset, mode: str) -> Q2Answer:
    # k == N: the top-k set is every row, so the vote is world-independent.
    winner = vote(np.asarray(dataset.labels()), dataset.num_labels)
    if mode == NORMALIZED:
        per = [0.0] * dataset.num_labels
        per[winner] = 1.0
        return Q2Answer(per, 1.0, NORMALIZED)
    per = [0] * dataset.num_labels
    per[winner] = dataset.world_count()
    return Q2Answer(per, dataset.world_count(), EXACT)


def q2_ss(dataset: IncompleteDataset, t, k: int = 3, kernel: str = "negative_euclidean",
          mode: str = EXACT) -> Q2Answer:
    """Counting query by sorted scan with a per-pivot flat DP."""
    _validate_query(dataset, k)
    if k == len(dataset.rows):
        return _unanimous_answer(dataset, mode)
    normalized = mode == NORMALIZED
    table = similarity_table(dataset, t, kernel)
    sizes = table.sizes
    labels = dataset.labels()
    num_labels = dataset.num_labels
    gammas = [g for g in compositions(k, num_labels)]
    winners = [_tally_winner(g) for g in gammas]

    alpha = initial_tally(len(sizes))
    result = [0.0] * num_labels if normalized else [0] * num_labels
    for i, j in scan_order(table):
        tally_advance(alpha, (i, j))
        dps = [label_support_dp(i, alpha, sizes, labels, l, k, normalized)
               for l in range(num_labels)]
        yi = labels[i]
        for g, win in zip(gammas, winners):
            if g[yi] < 1:
                continue
            result[win] += support(i, g, dps, labels)
    total = 1.0 if normalized else dataset.world_count()
    return Q2Answer(result, total, mode)


# ---------------------------------------------------------------------------
# segment-tree maintenance (ss-dc)
# ---------------------------------------------------------------------------

class SupportTree:
    """Segment tree over rows holding truncated slot-count polynomials.

    Each node stores, for c in 0..k, the number of ways the rows in its
    span can put exactly c members above the current pivot.  A parent is
    the degree-truncated convolution of its children; rows that do not
    carry the tree's label are identity leaves [1, 0, ..., 0].  Point
    updates touch one leaf-to-root path.
    """

    def __init__(self, n_rows: int, k: int, normalized: bool = False):
        self.k = k
        self.size = 1
        while self.size < max(n_rows, 1):
            self.size *= 2
        one = 1.0 if normalized else 1
        zero = 0.0 if normalized else 0
        self.identity = [one] + [zero] * k
        self.nodes = [list(self.identity) for _ in range(2 * self.size)]
        self.touched = 0

    def _pull(self, idx: int) -> None:
        left = self.nodes[2 * idx]
        right = self.nodes[2 * idx + 1]
        out = self.nodes[idx]
        for c in range(self.k + 1):
            acc = left[0] * right[c]
            for shift in range(1, c + 1):
                acc += left[shift] * right[c - shift]
            out[c] = acc

    def set_leaf(self, row: int, values: list) -> None:
        idx = self.size + row
        self.nodes[idx] = list(values)
        self.touched += 1
        idx //= 2
        while idx >= 1:
            self._pull(idx)
            self.touched += 1
            idx //= 2

    def root(self) -> list:
        return self.nodes[1]


def _regular_leaf(alpha_n, size_n, k, normalized):
    if normalized:
        below = alpha_n / size_n
        return [below, 1.0 - below] + [0.0] * (k - 1)
    return [alpha_n, size_n - alpha_n] + [0] * (k - 1)


def _pivot_leaf(size_i, k, normalized):
    if normalized:
        return [0.0, 1.0 / size_i] + [0.0] * (k - 1)
    return [0, 1] + [0] * (k - 1)


class _TreeScan:
    """Shared pivot-scan machinery for the tree-backed engines."""

    def __init__(self, dataset, t, k, kernel, normalized):
        self.table = similarity_table(dataset, t, kernel)
        self.sizes = self.table.sizes
        self.labels = dataset.labels()
        self.k = k
        self.normalized = normalized
        n = len(self.sizes)
        self.trees = [SupportTree(n, k, normalized) for _ in range(dataset.num_labels)]
        for row, lab in enumerate(self.labels):
            self.trees[lab].set_leaf(row, _regular_leaf(0, self.sizes[row], k, normalized))
        for tree in self.trees:
            tree.touched = 0
        self.alpha = initial_tally(n)
        self.prev_pivot_row: int | None = None

    def advance(self, pivot: tuple[int, int]) -> None:
        i = pivot[0]
        if self.prev_pivot_row is not None:
            p = self.prev_pivot_row
            self.trees[self.labels[p]].set_leaf(
                p, _regular_leaf(self.alpha[p], self.sizes[p], self.k, self.normalized))
        tally_advance(self.alpha, pivot)
        self.trees[self.labels[i]].set_leaf(i, _pivot_leaf(self.sizes[i], self.k, self.normalized))
        self.prev_pivot_row = i

    def roots(self) -> list[list]:
        return [tree.root() for tree in self.trees]

    def touched_counts(self) -> int:
        total = sum(tree.touched for tree in self.trees)
        for tree in self.trees:
            tree.touched = 0
        return total


def q2_ss_dc(dataset: IncompleteDataset, t, k: int = 3, kernel: str = "negative_euclidean",
             mode: str = EXACT, stats: dict | None = None, debug_check: bool = False) -> Q2Answer:
    """Counting query with segment-tree DP maintenance.

    Output is identical to `q2_ss`; only the per-pivot work drops from a
    full DP recomputation to two leaf-to-root path updates.  `stats`, when
    given, receives the maximum node count touched on a single pivot;
    `debug_check` recomputes the flat DP at every pivot and asserts the
    tree roots match (tests only).
    """
    _validate_query(dataset, k)
    if k == len(dataset.rows):
        return _unanimous_answer(dataset, mode)
    normalized = mode == NORMALIZED
    scan = _TreeScan(dataset, t, k, kernel, normalized)
    labels, sizes = scan.labels, scan.sizes
    num_labels = dataset.num_labels
    gammas = list(compositions(k, num_labels))
    winners = [_tally_winner(g) for g in gammas]

    result = [0.0] * num_labels if normalized else [0] * num_labels
    max_touched = 0
    for i, j in scan_order(scan.table):
        scan.advance((i, j))
        if stats is not None:
            max_touched = max(max_touched, scan.touched_counts())
        roots = scan.roots()
        if debug_check:
            for l in range(num_labels):
                flat = label_support_dp(i, scan.alpha, sizes, labels, l, k, normalized)
                assert _dp_close(roots[l], flat, normalized), (
                    f"tree root diverged from flat DP at pivot ({i},{j}), label {l}")
        yi = labels[i]
        for g, win in zip(gammas, winners):
            if g[yi] < 1:
                continue
            prod = roots[0][g[0]]
            for l in range(1, num_labels):
                prod = prod * roots[l][g[l]]
            result[win] += prod
    if stats is not None:
        stats["max_nodes_touched_per_pivot"] = max_touched
        stats["tree_depth"] = int(math.log2(scan.trees[0].size)) + 1
    total = 1.0 if normalized else dataset.world_count()
    return Q2Answer(result, total, mode)


def _dp_close(a, b, normalized):
    if normalized:
        return all(math.isclose(x, y, rel_tol=1e-9, abs_tol=1e-12) for x, y in zip(a, b))
    return a == b


def q2_ss_dc_mc(dataset: IncompleteDataset, t, k: int = 3, kernel: str = "negative_euclidean",
                mode: str = EXACT) -> Q2Answer:
    """Counting query polynomial in the number of labels.

    Instead of enumerating label tallies, each pivot accumulates, for every
    label l and winning tally c, the tree count of l placing c members
    above the pivot times a knapsack over the other labels.  The knapsack
    caps a smaller label id at c-1 and a larger one at c, which is exactly
    the smallest-label-wins vote tie rule.
    """
    _validate_query(dataset, k)
    if k == len(dataset.rows):
        return _unanimous_answer(dataset, mode)
    normalized = mode == NORMALIZED
    scan = _TreeScan(dataset, t, k, kernel, normalized)
    labels = scan.labels
    num_labels = dataset.num_labels

    result = [0.0] * num_labels if normalized else [0] * num_labels
    zero, one = (0.0, 1.0) if normalized else (0, 1)
    for pivot in scan_order(scan.table):
        scan.advance(pivot)
        roots = scan.roots()
        for l in range(num_labels):
            own = roots[l]
            for c in range(1, k + 1):
                if own[c] == 0:
                    continue
                budget = k - c
                dp = [one] + [zero] * budget
                for other in range(num_labels):
                    if other == l:
                        continue
                    cap = c - 1 if other < l else c
                    counts = roots[other]
                    new = [zero] * (budget + 1)
                    for b in range(budget + 1):
                        acc = new[b]
                        hi = min(cap, b)
                        for n_in in range(hi + 1):
                            acc += counts[n_in] * dp[b - n_in]
                        new[b] = acc
                    dp = new
                result[l] += own[c] * dp[budget]
    total = 1.0 if normalized else dataset.world_count()
    return Q2Answer(result, total, mode)


# ---------------------------------------------------------------------------
# extreme worlds (mm) and the exhaustive oracle
# ---------------------------------------------------------------------------

def extreme_world(dataset: IncompleteDataset, t, label: int,
                  kernel: str = "negative_euclidean") -> tuple[np.ndarray, np.ndarray]:
    """The world most favorable to `label`: most-similar candidates for its
    rows, least-similar for all others."""
    X = []
    for row in dataset.rows:
        scores = similarity_matrix(row.candidates, t, kernel)
        m = len(scores)
        if row.label == label:
            pick = np.lexsort((np.arange(m), -scores))[0]
        else:
            pick = np.lexsort((-np.arange(m), scores))[0]
        X.append(row.candidates[pick])
    return np.asarray(X), np.asarray(dataset.labels())


def q1_mm(dataset: IncompleteDataset, t, k: int = 3,
          kernel: str = "negative_euclidean") -> list[bool]:
    """Checking query via extreme worlds.  Binary label sets only."""
    if dataset.num_labels != 2:
        raise BinaryLabelsRequired("MM requires binary labels")
    _validate_query(dataset, k)
    predictions = [knn_predict(extreme_world(dataset, t, l, kernel), t, k, kernel)
                   for l in range(2)]
    reachable = [predictions[l] == l for l in range(2)]
    return [reachable[l] and not reachable[1 - l] for l in range(2)]


def brute_force(dataset: IncompleteDataset, t, k: int = 3, kernel: str = "negative_euclidean",
                limit: int = BRUTE_FORCE_LIMIT) -> tuple[list[bool], list[int]]:
    """Enumerate every possible world; returns (Q1 booleans, exact Q2 counts).

    Refuses instances above `limit` worlds rather than silently sampling.
    """
    _validate_query(dataset, k)
    total = dataset.world_count()
    if total > limit:
        raise BruteForceLimitExceeded(f"{total} worlds exceed the limit of {limit}")
    table = similarity_table(dataset, t, kernel)
    labels = dataset.labels()
    counts = [0] * dataset.num_labels
    n = len(labels)
    for choice in itertools.product(*(range(m) for m in table.sizes)):
        scores = [table.scores[r][choice[r]] for r in range(n)]
        top = sorted(range(n), key=lambda r: (-scores[r], r))[:k]
        tally = [0] * dataset.num_labels
        for r in top:
            tally[labels[r]] += 1
        counts[_tally_winner(tuple(tally))] += 1
    return [c == total for c in counts], counts


# ---------------------------------------------------------------------------
# dispatch and query-scope reduction
# ---------------------------------------------------------------------------

def q2(dataset: IncompleteDataset, t, k: int = 3, kernel: str = "negative_euclidean",
       mode: str = EXACT, engine: str = "ss-dc") -> Q2Answer:
    if engine == "ss":
        return q2_ss(dataset, t, k, kernel, mode)
    if engine == "ss-dc":
        return q2_ss_dc(dataset, t, k, kernel, mode)
    if engine == "ss-dc-mc":
        return q2_ss_dc_mc(dataset, t, k, kernel, mode)
    if engine == "brute":
        _, counts = brute_force(dataset, t, k, kernel)
        if mode == NORMALIZED:
            total = dataset.world_count()
            return Q2Answer([c / total for c in counts], 1.0, NORMALIZED)
        return Q2Answer(counts, dataset.world_count(), EXACT)
    raise ValueError(f"unknown Q2 engine {engine!r}; expected one of {Q2_ENGINES + ('brute',)}")


def q1(dataset: IncompleteDataset, t, k: int = 3, kernel: str = "negative_euclidean",
       engine: str = "auto") -> list[bool]:
    """Checking query.  `auto` uses MM for binary labels, exact Q2 otherwise."""
    if engine == "mm" or (engine == "auto" and dataset.num_labels == 2):
        return q1_mm(dataset, t, k, kernel)
    if engine == "brute":
        flags, _ = brute_force(dataset, t, k, kernel)
        return flags
    q2_engine = "ss-dc" if engine == "auto" else engine
    return q1_via_q2(q2(dataset, t, k, kernel, EXACT, q2_engine))


def feasible_topk_rows(dataset: IncompleteDataset, t, k: int,
                       kernel: str = "negative_euclidean") -> np.ndarray:
    """Rows that can appear in the top-k of at least one possible world.

    A row is ruled out when at least k other rows are forced above its best
    candidate (their worst candidate is strictly more similar).  Equal
    scores are kept feasible, which can only enlarge the set; dropping the
    complement never changes any world's top-k, so normalized counts and
    exact-mode certainty are preserved under this restriction.
    """
    t = np.asarray(t, dtype=float)
    his = np.empty(len(dataset.rows))
    los = np.empty(len(dataset.rows))
    for r, row in enumerate(dataset.rows):
        scores = similarity_matrix(row.candidates, t, kernel)
        his[r] = scores.max()
        los[r] = scores.min()
    sorted_los = np.sort(los)
    forced_above = len(los) - np.searchsorted(sorted_los, his, side="right")
    return np.flatnonzero(forced_above <= k - 1)


def restrict_rows(dataset: IncompleteDataset, rows) -> IncompleteDataset:
    return IncompleteDataset([dataset.rows[r] for r in rows], dataset.num_labels,
                             dataset.dimension)
