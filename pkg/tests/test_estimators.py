import numpy as np
import pytest

from cpknn.cleaning import simulated_oracle
from cpknn.estimators import CertainKNN, CPCleaner
from cpknn.validation import FieldError


def test_get_params_round_trip(worked_example):
    est = CertainKNN(k=1, engine="ss")
    params = est.get_params()
    assert params["k"] == 1 and params["engine"] == "ss"
    est.set_params(engine="ss-dc-mc")
    assert est.engine == "ss-dc-mc"


def test_certain_knn_counts_and_certainty(worked_example):
    dataset, t = worked_example
    est = CertainKNN(k=1, engine="ss-dc").fit(dataset)
    answers = est.count_worlds([t])
    assert answers[0].per_label == [6, 2]
    flags = est.certain_labels([t])
    assert flags.shape == (1, 2) and not flags.any()
    assert est.predict([t])[0] == 0  # label 0 wins 6 of 8 worlds
    assert est.prediction_entropy([t])[0] == pytest.approx(0.8113, abs=1e-4)


def test_certain_knn_accepts_json_payload(worked_example):
    dataset, t = worked_example
    est = CertainKNN(k=1).fit(dataset.to_json())
    assert est.count_worlds([t])[0].per_label == [6, 2]


def test_certain_knn_validates_dimensions(worked_example):
    dataset, _ = worked_example
    est = CertainKNN(k=1).fit(dataset)
    with pytest.raises(FieldError):
        est.count_worlds([[0.0, 1.0]])


def test_cpcleaner_runs_to_convergence(worked_example):
    dataset, t = worked_example
    truth = np.array([[0.2], [0.4], [0.1]])
    cleaner = CPCleaner(k=1).fit(dataset, val=[t], oracle=simulated_oracle(truth))
    assert cleaner.converged_
    assert cleaner.result_.status == "converged"
    assert set(cleaner.strategy_.order) <= {0, 1, 2}
