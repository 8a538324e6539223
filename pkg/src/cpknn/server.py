"""JSON-over-HTTP sessions that run the cleaning loop with a human oracle.

The server owns selection: it proposes the next row to clean, the client
submits the true value, and certainty flags advance.  Sessions are journaled
as JSON-lines event logs; recovery replays the log, recomputing the (pure)
selection state.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .cleaning import _contexts, _select_next_scored, mean_conditional_entropy
from .dataset import CandidateSet, IncompleteDataset
from .validation import FieldError, check_dataset_payload, check_engine, check_k, \
    check_kernel, check_points


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, field: str | None = None):
        self.status = status
        self.body = {"code": code, "message": message}
        if field:
            self.body["field"] = field


class Session:
    """One cleaning run; single-writer, many readers."""

    def __init__(self, sid: str, dataset: IncompleteDataset, val: np.ndarray, params: dict):
        self.id = sid
        self.dataset = dataset
        self.val = val
        self.k = params.get("k", 3)
        self.kernel = params.get("kernel", "negative_euclidean")
        self.engine = params.get("engine", "ss-dc")
        self.budget = params.get("budget")
        self.lock = threading.Lock()
        self.history: list[dict] = []
        self.pending: dict | None = None
        self.last_answer: tuple | None = None
        self.last_response: dict | None = None
        self._refresh()

    # -- state ------------------------------------------------------------

    def _refresh(self) -> None:
        self.contexts = _contexts(self.dataset, self.val, self.k, self.kernel, self.engine)
        self.flags = [ctx.cp for ctx in self.contexts]
        self.pending = None
        if all(self.flags):
            self.status = "converged"
        elif self.budget is not None and len(self.history) >= self.budget:
            self.status = "budget_exhausted"
        elif not self.dataset.dirty_rows():
            self.status = "converged"
        else:
            self.status = "selecting"

    def pct_cp(self) -> float:
        return float(np.mean(self.flags)) if self.flags else 1.0

    def mean_entropy(self) -> float:
        if len(self.val) == 0:
            return 0.0
        return mean_conditional_entropy(self.dataset, self.val, self.k, self.kernel,
                                        self.engine, self.contexts).mean

    def ensure_selection(self) -> dict:
        if self.status in ("converged", "budget_exhausted"):
            raise ApiError(409, "nothing_to_clean", f"session is {self.status}")
        if self.pending is None:
            row, expected = _select_next_scored(self.dataset, self.val, self.k,
                                                self.kernel, self.engine, self.contexts)
            cs = self.dataset.rows[row]
            self.pending = {
                "row": row,
                "expected_entropy": expected,
                "candidates": [[float(v) for v in c] for c in cs.candidates],
                "display": list(cs.display) if cs.display else None,
                "step": len(self.history),
            }
            self.status = "awaiting_answer"
        return dict(self.pending, pct_cp=self.pct_cp(), mean_entropy=self.mean_entropy(),
                    status=self.status)

    def apply_answer(self, row: int, answer, step: int) -> tuple[dict, dict]:
        """Returns (response, event); assumes the caller holds the lock."""
        key = (step, row, json.dumps(answer, sort_keys=True))
        if self.last_answer == key and self.last_response is not None:
            return self.last_response, {}
        if self.status in ("converged", "budget_exhausted"):
            raise ApiError(409, "nothing_to_clean", f"session is {self.status}")
        self.ensure_selection()
        if step != len(self.history):
            raise ApiError(409, "stale_step",
                           f"expected step {len(self.history)}, got {step}")
        if row != self.pending["row"]:
            raise ApiError(409, "stale_row",
                           f"pending row is {self.pending['row']}, got {row}")
        cs = self.dataset.rows[row]
        flagged_freeform = False
        if isinstance(answer, dict) and "value" in answer:
            value = check_points([answer["value"]], self.dataset.dimension, "answer.value")[0]
            match = [j for j, c in enumerate(cs.candidates) if np.array_equal(c, value)]
            if match:
                candidate = match[0]
            else:
                cands = np.vstack([cs.candidates, value[None, :]])
                display = (list(cs.display) + ["free-form answer"]) if cs.display else None
                rows = list(self.dataset.rows)
                rows[row] = CandidateSet(cands, cs.label, display)
                self.dataset = IncompleteDataset(rows, self.dataset.num_labels,
                                                 self.dataset.dimension)
                candidate = len(cands) - 1
                flagged_freeform = True
        elif isinstance(answer, dict) and "candidate" in answer:
            candidate = answer["candidate"]
            if not isinstance(candidate, int) or not 0 <= candidate < cs.size:
                raise ApiError(400, "bad_candidate",
                               f"candidate must be an integer in [0, {cs.size})",
                               "answer.candidate")
        else:
            raise ApiError(400, "bad_answer", "answer needs a candidate index or a value",
                           "answer")
        expected = self.pending["expected_entropy"]
        self.dataset = self.dataset.collapsed(row, candidate)
        self._refresh()
        record = {"step": len(self.history) + 1, "selected_row": row,
                  "expected_entropy": expected,
                  "realized_mean_entropy": self.mean_entropy(),
                  "pct_val_cp": self.pct_cp(), "cleaned_count": len(self.history) + 1,
                  "free_form": flagged_freeform}
        self.history.append(record)
        if self.budget is not None and len(self.history) >= self.budget \
                and self.status not in ("converged",):
            self.status = "budget_exhausted"
        response = {"status": self.status, "record": record, "pct_cp": self.pct_cp()}
        self.last_answer = key
        self.last_response = response
        event = {"type": "answered", "row": row, "answer": answer, "step": step}
        return response, event

    def status_payload(self) -> dict:
        return {"status": self.status, "pct_cp": self.pct_cp(),
                "per_point_cp": list(map(bool, self.flags)),
                "mean_entropy": self.mean_entropy(),
                "cleaned_count": len(self.history), "history": self.history}

    def export_payload(self) -> dict:
        converged = self.status == "converged"
        world = None
        if converged:
            X, y = self.dataset.first_world()
            world = {"X": [[float(v) for v in x] for x in X], "y": [int(v) for v in y]}
        return {"dataset": self.dataset.to_json(), "converged": converged,
                "not_converged": not converged, "world": world}


class SessionStore:
    def __init__(self, directory: str | None = None):
        self.directory = Path(directory) if directory else None
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._recover()

    def _journal(self, sid: str, event: dict) -> None:
        if self.directory and event:
            with open(self.directory / f"{sid}.jsonl", "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event) + "\n")

    def _recover(self) -> None:
        for path in sorted(self.directory.glob("*.jsonl")):
            sid = path.stem
            try:
                events = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
            except json.JSONDecodeError:
                continue
            if not events or events[0].get("type") != "created":
                continue
            made = events[0]
            session = Session(sid, check_dataset_payload(made["dataset"]),
                              check_points(made["val"], made["dataset"]["dimension"]),
                              made.get("params", {}))
            for event in events[1:]:
                if event.get("type") == "answered":
                    try:
                        session.apply_answer(event["row"], event["answer"], event["step"])
                    except ApiError:
                        break
            self.sessions[sid] = session

    def create(self, payload: dict) -> Session:
        dataset = check_dataset_payload(payload.get("dataset"))
        val = check_points(payload.get("val", []), dataset.dimension)
        params = payload.get("params") or {}
        check_k(params.get("k", 3), len(dataset.rows), "params.k")
        check_kernel(params.get("kernel", "negative_euclidean"), "params.kernel")
        engine = params.get("engine", "ss-dc")
        if engine == "mm":
            # MM only certifies; entropies still come from counting.
            if dataset.num_labels != 2:
                raise FieldError("params.engine", "MM requires binary labels")
            params = dict(params, engine="ss-dc")
        else:
            check_engine(engine, "params.engine", allow_q1=False)
        budget = params.get("budget")
        if budget is not None and (not isinstance(budget, int) or budget < 0):
            raise FieldError("params.budget", "must be a nonnegative integer")
        sid = uuid.uuid4().hex[:12]
        session = Session(sid, dataset, val, params)
        with self.lock:
            self.sessions[sid] = session
        self._journal(sid, {"type": "created", "dataset": payload["dataset"],
                            "val": payload.get("val", []), "params": params})
        return session

    def get(self, sid: str) -> Session:
        with self.lock:
            session = self.sessions.get(sid)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {sid!r}")
        return session

    def flush(self) -> None:
        """No-op placeholder: journals are appended synchronously."""


def create_app(store_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="cpknn cleaning sessions", version="0.1.0")
    store = SessionStore(store_dir)
    app.state.store = store

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(exc.body, status_code=exc.status)

    @app.exception_handler(FieldError)
    async def _field_error(_req: Request, exc: FieldError):
        return JSONResponse({"code": "invalid", "message": exc.reason, "field": exc.field},
                            status_code=400)

    @app.post("/sessions")
    async def create_session(payload: dict):
        session = store.create(payload)
        return {"id": session.id, "status": session.status, "pct_cp": session.pct_cp()}

    @app.get("/sessions/{sid}/suggestion")
    def suggestion(sid: str):
        session = store.get(sid)
        with session.lock:
            return session.ensure_selection()

    @app.post("/sessions/{sid}/answer")
    def answer(sid: str, payload: dict):
        session = store.get(sid)
        for key in ("row", "step"):
            if not isinstance(payload.get(key), int):
                raise ApiError(400, "bad_request", f"{key} must be an integer", key)
        body = {k: payload[k] for k in ("candidate", "value") if k in payload}
        with session.lock:
            response, event = session.apply_answer(payload["row"], body, payload["step"])
        store._journal(sid, event)
        return response

    @app.get("/sessions/{sid}/status")
    def status(sid: str):
        session = store.get(sid)
        with session.lock:
            return session.status_payload()

    @app.get("/sessions/{sid}/export")
    def export(sid: str):
        session = store.get(sid)
        with session.lock:
            return session.export_payload()

    return app
