import numpy as np
import pytest
from fastapi.testclient import TestClient

from cpknn.cleaning import select_next
from cpknn.server import create_app
from cpknn.validation import check_dataset_payload


def worked_example_payload():
    return {
        "num_labels": 2, "dimension": 1,
        "rows": [
            {"label": 1, "candidates": [[0.5], [0.2]], "display": ["f0=0.5", "f0=0.2"]},
            {"label": 1, "candidates": [[0.6], [0.4]], "display": ["f0=0.6", "f0=0.4"]},
            {"label": 0, "candidates": [[0.3], [0.1]], "display": ["f0=0.3", "f0=0.1"]},
        ],
    }


@pytest.fixture
def client(tmp_path):
    app = create_app(str(tmp_path / "sessions"))
    with TestClient(app) as c:
        yield c


def create_session(client, payload=None, val=None, params=None):
    body = {"dataset": payload or worked_example_payload(), "val": val if val is not None else [[0.0]],
            "params": params or {"k": 1}}
    response = client.post("/sessions", json=body)
    assert response.status_code == 200, response.text
    return response.json()


def test_create_clean_dataset_converges_immediately(client):
    payload = {"num_labels": 2, "dimension": 1,
               "rows": [{"label": 0, "candidates": [[0.0]]},
                        {"label": 1, "candidates": [[5.0]]}]}
    out = create_session(client, payload, val=[[0.1]], params={"k": 1})
    assert out["status"] == "converged"
    sid = out["id"]
    assert client.get(f"/sessions/{sid}/suggestion").status_code == 409


def test_create_fixture_session_selects(client):
    out = create_session(client)
    assert out["status"] == "selecting"
    assert out["pct_cp"] == 0.0


def test_malformed_candidates_rejected_with_field(client):
    payload = worked_example_payload()
    payload["rows"][1]["candidates"] = [[0.6], ["oops"]]
    response = client.post("/sessions", json={"dataset": payload, "val": [[0.0]]})
    assert response.status_code == 400
    assert response.json()["field"] == "dataset.rows[1].candidates"


def test_mm_engine_rejected_for_multiclass(client):
    payload = {"num_labels": 3, "dimension": 1,
               "rows": [{"label": i, "candidates": [[float(i)], [float(i) + 0.5]]}
                        for i in range(3)]}
    response = client.post("/sessions", json={"dataset": payload, "val": [[0.0]],
                                              "params": {"k": 1, "engine": "mm"}})
    assert response.status_code == 400
    assert response.json()["field"] == "params.engine"


def test_suggestion_idempotent_and_matches_library(client):
    out = create_session(client)
    sid = out["id"]
    s1 = client.get(f"/sessions/{sid}/suggestion").json()
    s2 = client.get(f"/sessions/{sid}/suggestion").json()
    assert s1["row"] == s2["row"]
    assert s1["expected_entropy"] == s2["expected_entropy"]
    dataset = check_dataset_payload(worked_example_payload())
    assert s1["row"] == select_next(dataset, np.array([[0.0]]), k=1)
    assert s1["display"] is not None


def test_answer_flow_to_convergence(client):
    out = create_session(client)
    sid = out["id"]
    pcts = [out["pct_cp"]]
    for _ in range(3):
        suggestion = client.get(f"/sessions/{sid}/suggestion")
        if suggestion.status_code == 409:
            break
        s = suggestion.json()
        response = client.post(f"/sessions/{sid}/answer",
                               json={"row": s["row"], "candidate": 0, "step": s["step"]})
        assert response.status_code == 200, response.text
        body = response.json()
        pcts.append(body["pct_cp"])
    status = client.get(f"/sessions/{sid}/status").json()
    assert status["status"] == "converged"
    assert all(a <= b + 1e-12 for a, b in zip(pcts, pcts[1:]))
    assert status["cleaned_count"] == len(status["history"])


def test_answer_replay_is_noop(client):
    out = create_session(client)
    sid = out["id"]
    s = client.get(f"/sessions/{sid}/suggestion").json()
    body = {"row": s["row"], "candidate": 1, "step": s["step"]}
    first = client.post(f"/sessions/{sid}/answer", json=body)
    again = client.post(f"/sessions/{sid}/answer", json=body)
    assert first.status_code == again.status_code == 200
    assert first.json() == again.json()
    status = client.get(f"/sessions/{sid}/status").json()
    assert status["cleaned_count"] == 1


def test_answer_wrong_row_conflicts(client):
    out = create_session(client)
    sid = out["id"]
    s = client.get(f"/sessions/{sid}/suggestion").json()
    wrong = (s["row"] + 1) % 3
    response = client.post(f"/sessions/{sid}/answer",
                           json={"row": wrong, "candidate": 0, "step": s["step"]})
    assert response.status_code == 409


def test_answer_out_of_range_candidate(client):
    out = create_session(client)
    sid = out["id"]
    s = client.get(f"/sessions/{sid}/suggestion").json()
    response = client.post(f"/sessions/{sid}/answer",
                           json={"row": s["row"], "candidate": 7, "step": s["step"]})
    assert response.status_code == 400


def test_free_form_value_matches_existing_candidate(client):
    out = create_session(client)
    sid = out["id"]
    s = client.get(f"/sessions/{sid}/suggestion").json()
    value = s["candidates"][1]
    response = client.post(f"/sessions/{sid}/answer",
                           json={"row": s["row"], "value": value, "step": s["step"]})
    assert response.status_code == 200
    assert response.json()["record"]["free_form"] is False


def test_free_form_new_value_flagged(client):
    out = create_session(client)
    sid = out["id"]
    s = client.get(f"/sessions/{sid}/suggestion").json()
    response = client.post(f"/sessions/{sid}/answer",
                           json={"row": s["row"], "value": [0.77], "step": s["step"]})
    assert response.status_code == 200
    assert response.json()["record"]["free_form"] is True


def test_export_round_trips_through_create(client):
    out = create_session(client)
    sid = out["id"]
    exported = client.get(f"/sessions/{sid}/export").json()
    assert exported["not_converged"] is True and exported["world"] is None
    response = client.post("/sessions", json={"dataset": exported["dataset"],
                                              "val": [[0.0]], "params": {"k": 1}})
    assert response.status_code == 200


def test_export_converged_world_is_singleton(client):
    out = create_session(client)
    sid = out["id"]
    while True:
        suggestion = client.get(f"/sessions/{sid}/suggestion")
        if suggestion.status_code == 409:
            break
        s = suggestion.json()
        client.post(f"/sessions/{sid}/answer",
                    json={"row": s["row"], "candidate": 0, "step": s["step"]})
    exported = client.get(f"/sessions/{sid}/export").json()
    assert exported["converged"] is True
    # the chosen world is one vector per row: a dataset of singletons
    assert exported["world"] is not None
    assert len(exported["world"]["X"]) == 3 and len(exported["world"]["y"]) == 3
    world_as_dataset = {"num_labels": 2, "dimension": 1,
                        "rows": [{"label": lab, "candidates": [vec]}
                                 for vec, lab in zip(exported["world"]["X"],
                                                     exported["world"]["y"])]}
    assert check_dataset_payload(world_as_dataset).world_count() == 1


def test_unknown_session_404(client):
    assert client.get("/sessions/nope/status").status_code == 404


def test_journal_recovery(tmp_path):
    store = str(tmp_path / "stash")
    app = create_app(store)
    with TestClient(app) as client:
        out = create_session(client)
        sid = out["id"]
        s = client.get(f"/sessions/{sid}/suggestion").json()
        client.post(f"/sessions/{sid}/answer",
                    json={"row": s["row"], "candidate": 0, "step": s["step"]})
        before = client.get(f"/sessions/{sid}/status").json()
    app2 = create_app(store)
    with TestClient(app2) as client2:
        after = client2.get(f"/sessions/{sid}/status").json()
        assert after["cleaned_count"] == before["cleaned_count"]
        assert after["status"] == before["status"]
        assert after["per_point_cp"] == before["per_point_cp"]
