import json

import numpy as np
import pytest

from cpknn import (CandidatePolicy, ColumnSchema, IncompleteDataset, RawTable, TableEncoder,
                   TableSchema, feature_importance, generate_candidates, inject_missing,
                   load_csv, save_csv, split)
from cpknn.dataset import DUMMY_CATEGORY, TableError


def schema_numeric(d=2, marker=""):
    cols = tuple([ColumnSchema(f"f{i}", "numeric") for i in range(d)]
                 + [ColumnSchema("label", "categorical")])
    return TableSchema(cols, label="label", missing_marker=marker)


def mixed_schema():
    return TableSchema((ColumnSchema("weight", "numeric"),
                        ColumnSchema("brand", "categorical"),
                        ColumnSchema("label", "categorical")), label="label")


def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_parses_missing_marker(tmp_path):
    path = write_csv(tmp_path, "f0,f1,label\n1.0,2.0,a\n,3.0,b\n4.0,5.0,a\n")
    table = load_csv(path, schema_numeric())
    assert table.missing_cells() == [(1, 0)]
    assert table.rows[0] == [1.0, 2.0, "a"]


def test_load_csv_rejects_missing_label(tmp_path):
    path = write_csv(tmp_path, "f0,f1,label\n1.0,2.0,\n")
    with pytest.raises(TableError, match="label"):
        load_csv(path, schema_numeric())


def test_load_csv_rejects_bad_numeric_with_location(tmp_path):
    path = write_csv(tmp_path, "f0,f1,label\n1.0,abc,a\n")
    with pytest.raises(TableError, match="row 0, column f1"):
        load_csv(path, schema_numeric())


def test_load_csv_rejects_ragged_rows(tmp_path):
    path = write_csv(tmp_path, "f0,f1,label\n1.0,2.0\n")
    with pytest.raises(TableError, match="expected 3 cells"):
        load_csv(path, schema_numeric())


def test_load_csv_rejects_header_mismatch(tmp_path):
    path = write_csv(tmp_path, "a,b,c\n1,2,x\n")
    with pytest.raises(TableError, match="header"):
        load_csv(path, schema_numeric())


def test_csv_round_trip(tmp_path):
    schema = mixed_schema()
    table = RawTable(schema, [[1.5, "x", "pos"], [None, "y", "neg"],
                              [0.1 + 0.2, None, "pos"]])
    out = tmp_path / "round.csv"
    save_csv(table, out)
    again = load_csv(out, schema)
    assert again.rows == table.rows


def test_candidate_statistics_from_known_column():
    schema = schema_numeric(d=1)
    rows = [[v, "a"] for v in (1.0, 2.0, 3.0, 4.0, 100.0)]
    rows.append([None, "b"])
    dataset = generate_candidates(RawTable(schema, rows))
    cands = dataset.rows[-1].candidates[:, 0].tolist()
    assert cands == [1.0, 2.0, 22.0, 4.0, 100.0]


def test_clean_rows_become_singletons():
    schema = schema_numeric(d=2)
    dataset = generate_candidates(RawTable(schema, [[1.0, 2.0, "a"], [3.0, 4.0, "b"]]))
    assert [r.size for r in dataset.rows] == [1, 1]
    assert dataset.world_count() == 1


def test_cartesian_product_within_cap():
    schema = schema_numeric(d=2)
    rows = [[float(i), float(i), "a"] for i in range(5)] + [[None, None, "b"]]
    dataset = generate_candidates(RawTable(schema, rows), CandidatePolicy(cap=25))
    assert dataset.rows[-1].size == 25  # 5 x 5 product fits the cap exactly


def test_cap_truncates_row_major():
    schema = schema_numeric(d=2)
    rows = [[float(i), float(i * 10), "a"] for i in range(5)] + [[None, None, "b"]]
    dataset = generate_candidates(RawTable(schema, rows), CandidatePolicy(cap=7))
    cands = dataset.rows[-1].candidates
    assert cands.shape[0] == 7
    # row-major: first cell's first repair paired with all second-cell repairs first
    assert len(set(cands[:5, 0])) == 1


def test_candidate_dedup():
    schema = schema_numeric(d=1)
    rows = [[1.0, "a"], [1.0, "a"], [1.0, "b"], [None, "b"]]
    dataset = generate_candidates(RawTable(schema, rows))
    cands = dataset.rows[-1].candidates
    assert cands.shape[0] == 1  # all five statistics coincide at 1.0
    vectors = {tuple(c) for c in cands}
    assert len(vectors) == cands.shape[0]


def test_entirely_missing_column_rejected():
    schema = schema_numeric(d=1)
    with pytest.raises(TableError, match="entirely missing"):
        generate_candidates(RawTable(schema, [[None, "a"], [None, "b"]]))


def test_categorical_candidates_top4_plus_dummy():
    schema = mixed_schema()
    rows = [[1.0, b, "x"] for b in ("a", "a", "a", "b", "b", "c", "c", "d", "e")]
    rows.append([1.0, None, "y"])
    dataset = generate_candidates(RawTable(schema, rows))
    last = dataset.rows[-1]
    assert last.size == 5  # top-4 categories plus the dummy
    encoder = TableEncoder(schema).fit(RawTable(schema, rows))
    codes = encoder.category_codes["brand"]
    expected = {codes[v] for v in ("a", "b", "c", "d")} | {codes[DUMMY_CATEGORY]}
    assert set(last.candidates[:, 1].tolist()) == expected


def test_encoding_orders_by_frequency_then_lexical():
    schema = mixed_schema()
    rows = [[1.0, b, "x"] for b in ("b", "b", "a", "a", "c")]
    encoder = TableEncoder(schema).fit(RawTable(schema, rows))
    codes = encoder.category_codes["brand"]
    assert codes["a"] == 0.0 and codes["b"] == 1.0 and codes["c"] == 2.0
    assert codes[DUMMY_CATEGORY] == 3.0


def test_inject_missing_row_count_and_determinism():
    schema = schema_numeric(d=3)
    rows = [[float(i), float(i), float(i), "a"] for i in range(100)]
    table = RawTable(schema, rows)
    out1 = inject_missing(table, 0.2, [1.0, 1.0, 1.0], seed=7)
    out2 = inject_missing(table, 0.2, [1.0, 1.0, 1.0], seed=7)
    assert len(out1.dirty_row_indices()) == 20
    assert out1.rows == out2.rows


def test_inject_missing_one_hot_importance():
    schema = schema_numeric(d=3)
    rows = [[float(i), float(i), float(i), "a"] for i in range(50)]
    out = inject_missing(RawTable(schema, rows), 0.3, [0.0, 0.0, 1.0], seed=1)
    assert {c for _, c in out.missing_cells()} == {2}


def test_inject_missing_distribution_matches_importances():
    schema = schema_numeric(d=4)
    rows = [[0.0, 0.0, 0.0, 0.0, "a"] for _ in range(12500)]
    imp = np.array([4.0, 3.0, 2.0, 1.0])
    out = inject_missing(RawTable(schema, rows), 0.8, imp, seed=3)
    cells = out.missing_cells()
    assert len(cells) == 10000
    counts = np.bincount([c for _, c in cells], minlength=4) / len(cells)
    tv = 0.5 * np.abs(counts - imp / imp.sum()).sum()
    assert tv <= 0.05


def test_inject_missing_validation():
    schema = schema_numeric(d=2)
    table = RawTable(schema, [[0.0, 0.0, "a"]] * 10)
    with pytest.raises(TableError):
        inject_missing(table, 1.5, [1.0, 1.0], seed=0)
    with pytest.raises(TableError):
        inject_missing(table, 0.2, [0.0, 0.0], seed=0)


def test_feature_importance_finds_informative_feature():
    rng = np.random.default_rng(0)
    n = 280
    x0 = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    X = np.column_stack([x0, rng.normal(scale=1.0, size=(n, 2))])
    y = (x0 > 0).astype(int)
    train = (X[:200], y[:200])
    holdout = (X[200:], y[200:])
    imp = feature_importance(train, holdout, k=3)
    assert np.argmax(imp) == 0
    # dropping the informative feature leaves roughly coin-flip accuracy
    from cpknn.knn import accuracy
    chance = accuracy((np.delete(train[0], 0, 1), train[1]),
                      (np.delete(holdout[0], 0, 1), holdout[1]), k=3)
    assert chance < 0.8


def test_feature_importance_duplicate_feature_is_redundant():
    rng = np.random.default_rng(4)
    n = 150
    x0 = rng.normal(size=n)
    X = np.column_stack([x0, x0])  # two identical columns
    y = (x0 > 0).astype(int)
    imp = feature_importance((X, y), (X[:50], y[:50]), k=3)
    assert imp[0] <= 1e-9 and imp[1] <= 1e-9


def test_split_sizes_and_determinism():
    schema = schema_numeric(d=1)
    table = RawTable(schema, [[float(i), "a"] for i in range(3052)])
    train, val, test = split(table, 1000, 1000, seed=5)
    assert (len(train), len(val), len(test)) == (1052, 1000, 1000)
    train2, _, _ = split(table, 1000, 1000, seed=5)
    assert train.rows == train2.rows
    ids = {r[0] for r in train.rows} | {r[0] for r in val.rows} | {r[0] for r in test.rows}
    assert len(ids) == 3052


def test_split_zero_sizes_returns_permuted_whole():
    schema = schema_numeric(d=1)
    table = RawTable(schema, [[float(i), "a"] for i in range(10)])
    train, val, test = split(table, 0, 0, seed=1)
    assert len(train) == 10 and len(val) == 0 and len(test) == 0
    assert sorted(r[0] for r in train.rows) == [float(i) for i in range(10)]


def test_split_rejects_oversized():
    schema = schema_numeric(d=1)
    table = RawTable(schema, [[0.0, "a"]] * 5)
    with pytest.raises(TableError):
        split(table, 3, 2, seed=0)


def test_dataset_json_round_trip(worked_example):
    dataset, _ = worked_example
    clone = IncompleteDataset.from_json(json.loads(json.dumps(dataset.to_json())))
    assert clone.num_labels == dataset.num_labels
    for a, b in zip(clone.rows, dataset.rows):
        assert np.array_equal(a.candidates, b.candidates) and a.label == b.label


def test_world_count_and_dirty_rows(worked_example):
    dataset, _ = worked_example
    assert dataset.world_count() == 8
    assert dataset.dirty_rows() == [0, 1, 2]
    collapsed = dataset.collapsed(0, 1)
    assert collapsed.world_count() == 4
    assert np.array_equal(collapsed.rows[0].candidates, np.array([[0.2]]))
