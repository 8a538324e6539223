"""Baseline cleaners, the gap-closed metric, and the experiment harness.

Reproduces the evaluation protocol at desk scale: split, inject missingness,
expand candidates (with the ground truth force-included so full cleaning can
recover it), then compare GroundTruth / Default / BoostClean / CPClean /
RandomClean on held-out test accuracy and %CP'ed curves.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .cleaning import CleaningStrategy, CPCleanResult, StepRecord, all_cp, cpclean_run, \
    mean_conditional_entropy, simulated_oracle
from .dataset import (CATEGORICAL, NUMERIC, NUMERIC_STATS, CandidateSet,
                      ColumnSchema, IncompleteDataset, RawTable, TableEncoder, TableSchema,
                      TableError, feature_importance, generate_candidates, inject_missing,
                      load_csv, split)
from .knn import accuracy


@dataclass(frozen=True)
class RepairMethod:
    """One uniform per-column imputation rule."""

    id: str
    numeric_stat: str = "mean"
    categorical_rule: str = "most_frequent"

    def __post_init__(self):
        if self.numeric_stat not in NUMERIC_STATS:
            raise TableError(f"unknown numeric statistic {self.numeric_stat!r}")


DEFAULT_METHODS = tuple(RepairMethod(f"impute-{s}", s) for s in
                        ("min", "p25", "mean", "p75", "max"))


def apply_repair(table: RawTable, method: RepairMethod) -> RawTable:
    """Fill every missing cell with the method's column statistic."""
    rows = [list(r) for r in table.rows]
    for idx in table.schema.feature_indices:
        col = table.schema.columns[idx]
        values = [r[idx] for r in table.rows if r[idx] is not None]
        if not values:
            raise TableError(f"column {col.name!r} is entirely missing")
        if col.kind == NUMERIC:
            fill = NUMERIC_STATS[method.numeric_stat](np.asarray(values, dtype=float))
        else:
            counts: dict = {}
            for v in values:
                counts[v] = counts.get(v, 0) + 1
            fill = sorted(counts, key=lambda v: (-counts[v], v))[0]
        for r in rows:
            if r[idx] is None:
                r[idx] = fill
    return RawTable(table.schema, rows)


def default_clean(table: RawTable) -> RawTable:
    """Column mean for numeric, most frequent value for categorical."""
    return apply_repair(table, RepairMethod("default", "mean"))


def boostclean_select(table: RawTable, methods, val, k: int = 3,
                      kernel: str = "negative_euclidean",
                      encoder: TableEncoder | None = None):
    """Pick the repair method with the best validation accuracy.

    Ties go to the first method in the list.  Returns (method, world)
    where world is the encoded (X, y) of the fully repaired table.
    """
    if not methods:
        raise TableError("no repair methods given")
    if len(val[0]) == 0:
        raise TableError("empty validation set")
    encoder = encoder or TableEncoder(table.schema).fit(table)
    best = None
    for method in methods:
        world = encoder.encode_table(apply_repair(table, method))
        acc = accuracy(world, val, k, kernel)
        if best is None or acc > best[0]:
            best = (acc, method, world)
    return best[1], best[2]


class NoAccuracyGap(ValueError):
    """Ground truth and default cleaning tie; gap closed is undefined."""


def gap_closed(acc_x: float, acc_default: float, acc_gt: float) -> float:
    """Percentage of the default-to-ground-truth accuracy gap recovered.

    The ratio is formed before scaling so the ground-truth and default
    identities (100 and 0) hold exactly in floating point.
    """
    if acc_gt == acc_default:
        raise NoAccuracyGap("no gap between ground truth and default cleaning")
    return 100.0 * ((acc_x - acc_default) / (acc_gt - acc_default))


# ---------------------------------------------------------------------------
# random-cleaning baseline
# ---------------------------------------------------------------------------

def random_clean(dataset: IncompleteDataset, val, oracle, seed: int,
                 k: int = 3, kernel: str = "negative_euclidean",
                 engine: str = "ss-dc", budget: int | None = None,
                 with_entropy: bool = True) -> CPCleanResult:
    """Uniform without-replacement cleaning order; same trace schema as CPClean."""
    if budget is not None and budget < 0:
        raise ValueError("budget must be nonnegative")
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(dataset.dirty_rows()))
    strategy = CleaningStrategy()
    done, flags = all_cp(dataset, val, k, kernel, engine)
    history = [flags]
    status = "converged" if done else None
    while status is None:
        if budget is not None and len(strategy.order) >= budget:
            status = "budget_exhausted"
            break
        if not order:
            status = "exhausted_dirty"
            break
        row = int(order.pop(0))
        answer = int(oracle(row, dataset.rows[row]))
        dataset = dataset.collapsed(row, answer)
        strategy.order.append(row)
        done, flags = all_cp(dataset, val, k, kernel, engine)
        history.append(flags)
        realized = (mean_conditional_entropy(dataset, val, k, kernel, engine).mean
                    if with_entropy else None)
        strategy.records.append(StepRecord(
            step=len(strategy.order), selected_row=row, expected_entropy=None,
            realized_mean_entropy=realized,
            pct_val_cp=float(np.mean(flags)) if flags else 1.0,
            cleaned_count=len(strategy.order)))
        if done:
            status = "converged"
    return CPCleanResult(strategy, dataset, status, history)


# ---------------------------------------------------------------------------
# synthetic data with a controllable accuracy gap
# ---------------------------------------------------------------------------

def synthetic_table(n: int, d: int = 6, seed: int = 0, noise_scale: float = 0.5,
                    positive_rate: float = 0.6, margin: float = 0.1,
                    spread: float = 1.2) -> RawTable:
    """Complete table whose label is the sign of the first feature.

    The signed feature is uniform outside a small margin, with a class
    imbalance, so its column mean sits just inside the majority side: mean
    imputation plants wrong-side ghosts near the boundary.  The remaining
    features are Gaussian, which concentrates both the validation mass and
    the imputation damage in the same central region.
    """
    rng = np.random.default_rng(seed)
    side = np.where(rng.random(n) < positive_rate, 1.0, -1.0)
    signal = side * rng.uniform(margin, spread, size=n)
    noise = rng.normal(scale=noise_scale, size=(n, d - 1))
    labels = (side > 0).astype(int)
    columns = tuple([ColumnSchema(f"f{i}", NUMERIC) for i in range(d)]
                    + [ColumnSchema("label", CATEGORICAL)])
    schema = TableSchema(columns, label="label")
    rows = [[float(signal[i])] + [float(v) for v in noise[i]] + [str(labels[i])]
            for i in range(n)]
    return RawTable(schema, rows)


def force_include_truth(dataset: IncompleteDataset, truth) -> IncompleteDataset:
    """Replace each dirty row's closest candidate with the true vector.

    Enforces the validity assumption (the true world is a possible world)
    without growing candidate sets.  Clean rows must already equal the truth.
    """
    truth = np.asarray(truth, dtype=float)
    rows = []
    for i, row in enumerate(dataset.rows):
        if row.size == 1:
            if not np.array_equal(row.candidates[0], truth[i]):
                raise TableError(f"clean row {i} disagrees with the ground truth")
            rows.append(row)
            continue
        dist = np.linalg.norm(row.candidates - truth[i][None, :], axis=1)
        j = int(np.lexsort((np.arange(len(dist)), dist))[0])
        cands = row.candidates.copy()
        cands[j] = truth[i]
        display = list(row.display) if row.display else None
        if display is not None:
            display[j] = "ground truth"
        rows.append(CandidateSet(cands, row.label, display))
    out = IncompleteDataset(rows, dataset.num_labels, dataset.dimension)
    for i, row in enumerate(out.rows):
        assert any(np.array_equal(c, truth[i]) for c in row.candidates)
    return out


# ---------------------------------------------------------------------------
# experiment harness
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    dataset: dict = field(default_factory=lambda: {"kind": "synthetic", "n": 300, "d": 6})
    seed: int = 0
    rate: float = 0.2
    k: int = 3
    kernel: str = "negative_euclidean"
    engine: str = "ss-dc"
    val_size: int = 100
    test_size: int = 200
    budget: int | None = None
    random_repeats: int = 10
    methods: tuple = tuple(m.id for m in DEFAULT_METHODS)
    with_entropy: bool = False
    val_sweep: tuple = ()

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["methods"] = list(self.methods)
        out["val_sweep"] = list(self.val_sweep)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        known = {f: obj[f] for f in cls.__dataclass_fields__ if f in obj}
        if "methods" in known:
            known["methods"] = tuple(known["methods"])
        if "val_sweep" in known:
            known["val_sweep"] = tuple(known["val_sweep"])
        return cls(**known)


@dataclass
class CurvePoint:
    fraction_cleaned: float
    pct_cp: float
    gap_closed: float | None
    method: str
    seed: int

    def row(self) -> list:
        return [self.fraction_cleaned, self.pct_cp, self.gap_closed, self.method, self.seed]


@dataclass
class ExperimentReport:
    config: dict
    accuracies: dict
    gaps: dict
    cleaned_counts: dict
    curves: list[CurvePoint]
    sweeps: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"config": self.config, "accuracies": self.accuracies, "gaps": self.gaps,
                "cleaned_counts": self.cleaned_counts,
                "curves": [p.row() for p in self.curves], "sweeps": self.sweeps}

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentReport":
        curves = [CurvePoint(*row) for row in obj["curves"]]
        return cls(obj["config"], obj["accuracies"], obj["gaps"], obj["cleaned_counts"],
                   curves, obj.get("sweeps", {}))

    def curves_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["fraction_cleaned", "pct_cp", "gap_closed", "method", "seed"])
        for p in self.curves:
            writer.writerow(p.row())
        return buf.getvalue()


def _method_by_id(method_id: str) -> RepairMethod:
    for m in DEFAULT_METHODS:
        if m.id == method_id:
            return m
    raise TableError(f"unknown repair method {method_id!r}")


def _load_experiment_table(spec: dict) -> RawTable:
    if spec.get("kind") == "synthetic":
        return synthetic_table(spec.get("n", 300), spec.get("d", 6), spec.get("seed", 0),
                               spec.get("noise_scale", 0.5))
    if spec.get("kind") == "csv":
        table = load_csv(spec["path"], TableSchema.load(spec["schema"]))
        if table.missing_cells():
            raise TableError("experiment input must be complete; it serves as ground truth")
        return table
    raise TableError(f"unknown dataset kind {spec.get('kind')!r}")


def _world_after_steps(base_X, answers, order, steps):
    X = base_X.copy()
    for row in order[:steps]:
        X[row] = answers[row]
    return X


def _run_curves(result: CPCleanResult, method: str, seed: int, n_dirty: int,
                default_X, truth_answers, y, test, k, kernel,
                acc_default, acc_gt) -> list[CurvePoint]:
    points = []
    initial_pct = float(np.mean(result.cp_history[0])) if result.cp_history[0] else 1.0
    pcts = [initial_pct] + [r.pct_val_cp for r in result.strategy.records]
    for s, pct in enumerate(pcts):
        X = _world_after_steps(default_X, truth_answers, result.strategy.order, s)
        acc = accuracy((X, y), test, k, kernel)
        gap = None
        if acc_gt != acc_default:
            gap = gap_closed(acc, acc_default, acc_gt)
        points.append(CurvePoint(s / n_dirty if n_dirty else 1.0, pct, gap, method, seed))
    return points


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """The full pipeline; see the module docstring for the protocol."""
    spec = dict(config.dataset)
    spec.setdefault("seed", config.seed)
    if spec.get("kind") == "synthetic":
        # "n" is the training size; the splits come on top of it.
        spec["n"] = spec.get("n", 300) + config.val_size + config.test_size
    table = _load_experiment_table(spec)
    train, val_t, test_t = split(table, config.val_size, config.test_size, config.seed)
    encoder = TableEncoder(train.schema).fit(train)
    truth_X, y = encoder.encode_table(train)
    val = encoder.encode_table(val_t)
    test = encoder.encode_table(test_t)

    importances = feature_importance((truth_X, y), val, config.k, config.kernel)
    if importances.sum() <= 0:
        importances = np.ones_like(importances)
    dirty = inject_missing(train, config.rate, importances, config.seed)
    dataset = force_include_truth(generate_candidates(dirty, encoder=encoder), truth_X)
    n_dirty = len(dataset.dirty_rows())

    acc_gt = accuracy((truth_X, y), test, config.k, config.kernel)
    default_X, _ = encoder.encode_table(default_clean(dirty))
    acc_default = accuracy((default_X, y), test, config.k, config.kernel)
    methods = [_method_by_id(mid) for mid in config.methods]
    boost_method, boost_world = boostclean_select(dirty, methods, val, config.k,
                                                  config.kernel, encoder)
    acc_boost = accuracy(boost_world, test, config.k, config.kernel)

    oracle = simulated_oracle(truth_X)
    budget = config.budget
    cp_result = cpclean_run(dataset, val[0], oracle, config.k, config.kernel,
                            config.engine, budget, config.with_entropy)
    truth_answers = {i: truth_X[i] for i in range(len(truth_X))}

    curves = _run_curves(cp_result, "cpclean", config.seed, n_dirty, default_X,
                         truth_answers, y, test, config.k, config.kernel,
                         acc_default, acc_gt)
    random_counts = []
    for r in range(config.random_repeats):
        rnd = random_clean(dataset, val[0], oracle, seed=config.seed * 1000 + r,
                           k=config.k, kernel=config.kernel, engine=config.engine,
                           budget=budget, with_entropy=config.with_entropy)
        random_counts.append(len(rnd.strategy.order))
        curves.extend(_run_curves(rnd, "random", config.seed * 1000 + r, n_dirty,
                                  default_X, truth_answers, y, test, config.k,
                                  config.kernel, acc_default, acc_gt))

    cp_final_X = _world_after_steps(default_X, truth_answers, cp_result.strategy.order,
                                    len(cp_result.strategy.order))
    acc_cp = accuracy((cp_final_X, y), test, config.k, config.kernel)

    accuracies = {"ground_truth": acc_gt, "default": acc_default,
                  "boostclean": acc_boost, "cpclean": acc_cp,
                  "holoclean": "not available"}
    gaps = {}
    if acc_gt != acc_default:
        gaps = {"ground_truth": gap_closed(acc_gt, acc_default, acc_gt),
                "default": gap_closed(acc_default, acc_default, acc_gt),
                "boostclean": gap_closed(acc_boost, acc_default, acc_gt),
                "cpclean": gap_closed(acc_cp, acc_default, acc_gt),
                "holoclean": "not available"}
    else:
        gaps = {"flag": "no gap"}

    report = ExperimentReport(
        config=config.to_json(),
        accuracies=accuracies,
        gaps=gaps,
        cleaned_counts={"cpclean": len(cp_result.strategy.order),
                        "cpclean_converged": cp_result.converged,
                        "random_mean": float(np.mean(random_counts)) if random_counts else 0.0,
                        "dirty_rows": n_dirty},
        curves=curves)

    for size in config.val_sweep:
        sub = (val[0][:size], val[1][:size])
        res = cpclean_run(dataset, sub[0], oracle, config.k, config.kernel,
                          config.engine, budget, config.with_entropy)
        X = _world_after_steps(default_X, truth_answers, res.strategy.order,
                               len(res.strategy.order))
        acc = accuracy((X, y), test, config.k, config.kernel)
        report.sweeps[str(size)] = {
            "cleaned": len(res.strategy.order),
            "converged": res.converged,
            "gap_closed": gap_closed(acc, acc_default, acc_gt) if acc_gt != acc_default else None,
        }
    return report
