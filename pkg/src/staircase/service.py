"""HTTP session API for running a live experiment trial by trial.

Every state change is one JSON line in an append-only event log, fsynced
before the response commits, so the in-memory index can be rebuilt from
disk after a crash or restart.  Bisection noise is drawn server-side at
recommendation time: the level offered to the operator is committed
before the physical trial happens.
"""

from __future__ import annotations

import io
import json
import math
import os
import re
import threading
import time
import uuid
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .designs import (
    ExperimentPath,
    MarkovLanglie,
    SimSeed,
    Trial,
    next_level,
    rule_from_dict,
    rule_to_dict,
    start_level,
)
from .inference import FitStatus, ci_fieller, ci_wald, fit_mle
from .models import Link

__all__ = ["create_app"]

_RULE_FIELD = re.compile(r"\b(eps|x1|kind|d|c|q|a|b)\b")


class _ApiError(Exception):
    def __init__(self, status: int, code: str, message: str,
                 field: Optional[str] = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = field

    def response(self) -> JSONResponse:
        body = {"code": self.code, "message": self.message}
        if self.field is not None:
            body["field"] = self.field
        return JSONResponse(body, status_code=self.status)


class _LiveSession:
    """Single experiment; mutations are serialized by the per-session lock."""

    def __init__(self, sid: str, rule, link: Link, created_at: float,
                 noise_master: Optional[int]):
        self.id = sid
        self.rule = rule
        self.link = link
        self.created_at = created_at
        self.noise_master = noise_master
        self.status = "active"
        # one (x, y, noise) tuple per trial, appended atomically so that
        # readers always see a consistent prefix
        self.trials: list = []
        self.next_level = start_level(rule)
        self.lock = threading.Lock()
        self._rng = (SimSeed(noise_master, 0).noise_rng()
                     if noise_master is not None else None)

    def trial_objects(self, upto: Optional[int] = None) -> list:
        rows = self.trials if upto is None else self.trials[:upto]
        return [Trial(i + 1, x, y) for i, (x, y, _) in enumerate(rows)]

    def draw_noise(self) -> Optional[float]:
        if self._rng is None:
            return None
        return float(self._rng.random())


class _Store:
    def __init__(self, data_dir):
        self.dir = Path(data_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.dir / "events.jsonl"
        self.sessions: dict = {}
        self.lock = threading.Lock()
        self._rebuild()
        self._log = open(self.log_path, "a", encoding="utf-8")
        self._log_lock = threading.Lock()

    def _rebuild(self):
        if not self.log_path.exists():
            return
        for line in self.log_path.read_text(encoding="utf-8").splitlines():
            rec = json.loads(line)
            kind = rec["event"]
            if kind == "created":
                sess = _LiveSession(rec["id"], rule_from_dict(rec["rule"]),
                                    Link(rec["link"]), rec["created_at"],
                                    rec["noise_master"])
                self.sessions[sess.id] = sess
            elif kind == "outcome":
                sess = self.sessions[rec["id"]]
                noise = rec["noise"]
                if noise is not None:
                    # replaying the draw both restores the generator
                    # position and checks the log against the stream
                    if sess.draw_noise() != noise:
                        raise ValueError(
                            f"event log for session {sess.id} does not "
                            "match its noise stream")
                sess.trials.append((rec["x"], rec["y"], noise))
                nxt = next_level(sess.rule, sess.trial_objects(), noise=noise)
                if nxt != rec["next_level"]:
                    raise ValueError(
                        f"event log for session {sess.id} is inconsistent "
                        f"at trial {len(sess.trials)}")
                sess.next_level = nxt
            elif kind == "closed":
                self.sessions[rec["id"]].status = "closed"
            else:
                raise ValueError(f"unknown event type {kind!r} in log")

    def append(self, rec: dict):
        with self._log_lock:
            self._log.write(json.dumps(rec, separators=(",", ":")) + "\n")
            self._log.flush()
            os.fsync(self._log.fileno())

    def get(self, sid: str) -> _LiveSession:
        sess = self.sessions.get(sid)
        if sess is None:
            raise _ApiError(404, "unknown_session", f"no session {sid!r}")
        return sess

    def close_log(self):
        self._log.close()


def _view(sess: _LiveSession) -> dict:
    trials = [{"index": i + 1, "x": x, "y": y}
              for i, (x, y, _) in enumerate(list(sess.trials))]
    active = sess.status == "active"
    return {
        "id": sess.id,
        "rule": rule_to_dict(sess.rule),
        "link_for_fit": sess.link.value,
        "status": sess.status,
        "created_at": sess.created_at,
        "trials": trials,
        "next_level": sess.next_level if active else None,
        "next_trial_index": len(trials) + 1 if active else None,
    }


def _not_estimable(reason: str, n: int) -> dict:
    return {"estimable": False, "reason": reason, "n": n}


def _estimate_payload(sess: _LiveSession, q: float, level: float) -> dict:
    rows = list(sess.trials)
    n = len(rows)
    xs = [x for x, _, _ in rows]
    ys = [y for _, y, _ in rows]
    if n < 2 or len(set(ys)) < 2 or len(set(xs)) < 2:
        return _not_estimable("too_few", n)
    path = ExperimentPath(rule=sess.rule, xs=np.array(xs),
                          ys=np.array(ys, dtype=np.int8))
    est = fit_mle(path, sess.link)
    if est.status is FitStatus.SEPARATED:
        return _not_estimable("separated", n)
    if est.status is FitStatus.SINGULAR:
        return _not_estimable("singular", n)
    if est.status is not FitStatus.CONVERGED:
        return _not_estimable("not_converged", n)
    try:
        wald = ci_wald(est, sess.link, q, level)
        fieller = ci_fieller(est, sess.link, q, level)
    except ValueError:
        return _not_estimable("degenerate", n)
    fd = fieller.to_dict()
    # JSON has no infinities; an unbounded side travels as null
    for side in ("lower", "upper"):
        if not math.isfinite(fd[side]):
            fd[side] = None
    return {
        "estimable": True,
        "q": q,
        "level": level,
        "estimate": est.to_dict(),
        "gamma_hat": wald.gamma_hat,
        "wald": {"lower": wald.lower, "upper": wald.upper,
                 "half_width": wald.half_width},
        "fieller": fd,
    }


class _CreateBody(BaseModel):
    rule: dict
    link: str


class _OutcomeBody(BaseModel):
    y: int
    trial_index: int


def create_app(data_dir) -> FastAPI:
    """Build the session API backed by an event log under data_dir."""
    store = _Store(data_dir)

    @asynccontextmanager
    async def lifespan(app):
        yield
        store.close_log()

    app = FastAPI(title="staircase sessions", docs_url=None, redoc_url=None,
                  lifespan=lifespan)
    app.state.store = store

    @app.exception_handler(_ApiError)
    async def api_error(request, exc: _ApiError):
        return exc.response()

    @app.exception_handler(RequestValidationError)
    async def body_error(request, exc: RequestValidationError):
        err = exc.errors()[0]
        loc = [str(p) for p in err.get("loc", ()) if p not in ("body", "query")]
        body = {"code": "validation_error", "message": err.get("msg", "invalid")}
        if loc:
            body["field"] = loc[-1]
        return JSONResponse(body, status_code=422)

    @app.post("/sessions", status_code=201)
    def create_session(body: _CreateBody):
        try:
            rule = rule_from_dict(body.rule)
        except (ValueError, TypeError) as e:
            msg = str(e)
            m = _RULE_FIELD.search(msg)
            raise _ApiError(422, "validation_error", msg,
                            field=m.group(1) if m else "rule")
        try:
            link = Link(body.link)
        except ValueError:
            raise _ApiError(422, "validation_error",
                            f"unknown link {body.link!r}", field="link")
        noise_master = None
        if isinstance(rule, MarkovLanglie):
            noise_master = int(np.random.SeedSequence().entropy)
        sess = _LiveSession(uuid.uuid4().hex, rule, link, time.time(),
                            noise_master)
        store.append({"event": "created", "id": sess.id,
                      "created_at": sess.created_at,
                      "rule": rule_to_dict(rule), "link": link.value,
                      "noise_master": noise_master})
        with store.lock:
            store.sessions[sess.id] = sess
        return _view(sess)

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        return _view(store.get(sid))

    @app.post("/sessions/{sid}/outcomes")
    def record_outcome(sid: str, body: _OutcomeBody):
        sess = store.get(sid)
        if body.y not in (0, 1):
            raise _ApiError(422, "validation_error",
                            "outcome must be 0 or 1", field="y")
        with sess.lock:
            if sess.status != "active":
                raise _ApiError(409, "session_closed",
                                "session is closed; no further trials")
            expected = len(sess.trials) + 1
            if body.trial_index != expected:
                raise _ApiError(
                    409, "stale_trial_index",
                    f"expected trial_index {expected}, got {body.trial_index}")
            x = sess.next_level
            noise = sess.draw_noise()
            trial = Trial(expected, x, body.y)
            nxt = next_level(sess.rule, sess.trial_objects() + [trial],
                             noise=noise)
            store.append({"event": "outcome", "id": sess.id,
                          "trial_index": expected, "x": x, "y": body.y,
                          "noise": noise, "next_level": nxt})
            sess.trials.append((x, body.y, noise))
            sess.next_level = nxt
        return {"trial_index": expected, "recorded_level": x,
                "next_level": nxt, "next_trial_index": expected + 1}

    @app.get("/sessions/{sid}/estimate")
    def estimate(sid: str, q: float = 0.5, level: float = 0.95):
        sess = store.get(sid)
        if not 0.0 < q < 1.0:
            raise _ApiError(422, "validation_error",
                            "q must lie in (0, 1)", field="q")
        if not 0.0 < level < 1.0:
            raise _ApiError(422, "validation_error",
                            "level must lie in (0, 1)", field="level")
        return _estimate_payload(sess, q, level)

    @app.get("/sessions/{sid}/export")
    def export(sid: str):
        sess = store.get(sid)
        rows = list(sess.trials)
        if not rows:
            raise _ApiError(409, "no_trials", "nothing recorded yet")
        noise = None
        if isinstance(sess.rule, MarkovLanglie):
            noise = np.array([u for _, _, u in rows])
        path = ExperimentPath(rule=sess.rule,
                              xs=np.array([x for x, _, _ in rows]),
                              ys=np.array([y for _, y, _ in rows],
                                          dtype=np.int8),
                              noise=noise)
        buf = io.StringIO()
        path.to_csv(buf)
        return PlainTextResponse(buf.getvalue(), media_type="text/csv")

    @app.post("/sessions/{sid}/close")
    def close(sid: str):
        sess = store.get(sid)
        with sess.lock:
            if sess.status == "active":
                store.append({"event": "closed", "id": sess.id})
                sess.status = "closed"
        return _view(sess)

    return app
