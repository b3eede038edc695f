"""HTTP service that shows forced-choice trials and journals responses.

The service is a thin stateful shell around trial_engine: it owns the
per-subject sessions, pre-renders every trial's stimulus image once at
startup, and appends each accepted response to the journal before
acknowledging it.  Restarting with the same trials file and journal
rebuilds every session at its exact cursor.
"""

from __future__ import annotations

import hashlib
import io
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from PIL import Image, ImageDraw

from .errors import FormatError, SequencingError
from .risk_eval import estimate_risk
from .trial_engine import (
    CHOICES,
    ResponseRecord,
    Session,
    TrialRecord,
    TrialSpec,
    append_response,
    load_responses,
    load_trials,
    record_response,
    render_trial_spec,
)

_CANVAS_GRAY = 128
_POOLING_BY_QUERY = {"mode": "mode_vote", "mean": "per_subject_mean"}


def subject_trial_order(subject_id: str, trial_ids: list[str]) -> tuple[str, ...]:
    """Per-subject presentation order, a pure function of the subject id
    so that crash recovery regenerates the same order."""
    digest = hashlib.sha256(subject_id.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    return tuple(trial_ids[i] for i in rng.permutation(len(trial_ids)))


def _load_original(images_dir: str | Path | None, image_id: str, size: tuple[int, int]) -> Image.Image:
    """The untouched stimulus image, or a flat gray canvas when no image
    directory was provided (synthetic or headless runs)."""
    width, height = size
    if images_dir is not None:
        for ext in (".png", ".jpg", ".jpeg", ".bmp", ".pgm"):
            candidate = Path(images_dir) / f"{image_id}{ext}"
            if candidate.exists():
                img = Image.open(candidate).convert("RGB")
                if img.size != (width, height):
                    raise ValueError(
                        f"image {candidate.name} is {img.size[0]}x{img.size[1]} but "
                        f"trials expect {width}x{height}"
                    )
                return img
    return Image.new("RGB", (width, height), (_CANVAS_GRAY,) * 3)


def render_composite(spec: TrialSpec, original: Image.Image) -> bytes:
    """Draw the trial stimulus: both crop windows outlined at high
    contrast on the original image, each segment overdrawn in red, with
    the side label at the window corner.  Deterministic PNG bytes."""
    img = original.copy()
    draw = ImageDraw.Draw(img)
    for window in (spec.left, spec.right):
        r0, c0 = window.origin
        r1, c1 = r0 + window.size - 1, c0 + window.size - 1
        draw.rectangle((c0 - 1, r0 - 1, c1 + 1, r1 + 1), outline=(0, 0, 0), width=1)
        draw.rectangle((c0, r0, c1, r1), outline=(255, 255, 255), width=2)
        draw.point([(c, r) for r, c in window.polyline], fill=(255, 0, 0))
        label = "L" if window.label == "left" else "R"
        draw.text((c0 + 4, r0 + 3), label, fill=(0, 0, 0))
        draw.text((c0 + 3, r0 + 2), label, fill=(255, 255, 255))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def _image_to_png(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


class ServiceState:
    """All mutable service state plus the pre-rendered stimulus cache."""

    def __init__(
        self,
        trials: list[TrialRecord],
        journal_path: str | Path,
        images_dir: str | Path | None = None,
    ):
        if not trials:
            raise ValueError("the trials file holds no trials")
        self.trials = {t.trial_id: t for t in trials}
        self.trial_ids = [t.trial_id for t in trials]
        self.journal_path = Path(journal_path)
        self.sessions: dict[str, Session] = {}
        self.session_by_subject: dict[str, str] = {}
        self.counter = 0
        self.lock = threading.Lock()

        self.originals: dict[str, bytes] = {}
        self.composites: dict[str, bytes] = {}
        originals_img: dict[str, Image.Image] = {}
        for trial in trials:
            spec = render_trial_spec(trial)
            if trial.image_id not in originals_img:
                originals_img[trial.image_id] = _load_original(
                    images_dir, trial.image_id, spec.image_size
                )
                self.originals[trial.image_id] = _image_to_png(
                    originals_img[trial.image_id]
                )
            self.composites[trial.trial_id] = render_composite(
                spec, originals_img[trial.image_id]
            )

        self._replay_journal()

    def _new_session(self, subject_id: str) -> Session:
        self.counter += 1
        session = Session(
            session_id=f"sess-{self.counter:04d}",
            subject_id=subject_id,
            trial_order=subject_trial_order(subject_id, self.trial_ids),
        )
        self.sessions[session.session_id] = session
        self.session_by_subject[subject_id] = session.session_id
        return session

    def _replay_journal(self) -> None:
        for record in load_responses(self.journal_path):
            sid = self.session_by_subject.get(record.subject_id)
            session = self.sessions[sid] if sid else self._new_session(record.subject_id)
            try:
                record_response(session, record)
            except SequencingError as e:
                raise FormatError(
                    f"journal does not replay against this trials file: {e}"
                ) from e


def create_app(
    trials_path: str | Path,
    journal_path: str | Path,
    images_dir: str | Path | None = None,
) -> FastAPI:
    trials = load_trials(trials_path)
    state = ServiceState(trials, journal_path, images_dir=images_dir)
    trial_file_name = Path(trials_path).name

    app = FastAPI(title="benchlab collection service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.benchlab = state

    def _progress(session: Session) -> dict:
        return {"done": session.cursor, "total": session.n_trials}

    @app.post("/api/sessions")
    async def create_session(request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "malformed JSON body"}, status_code=400)
        if not isinstance(body, dict):
            return JSONResponse({"error": "body must be a JSON object"}, status_code=400)
        subject_id = body.get("subject_id")
        if not isinstance(subject_id, str) or not subject_id:
            return JSONResponse(
                {"error": "subject_id must be a nonempty string"}, status_code=400
            )
        ref = body.get("trial_file_ref")
        if ref is not None and ref != trial_file_name:
            return JSONResponse(
                {"error": f"service is running trial file {trial_file_name!r}, "
                          f"not {ref!r}"},
                status_code=400,
            )
        with state.lock:
            existing_id = state.session_by_subject.get(subject_id)
            if existing_id is not None:
                existing = state.sessions[existing_id]
                return JSONResponse(
                    {
                        "error": f"subject {subject_id!r} already has a session",
                        "session_id": existing_id,
                        "status": existing.status,
                        "resume": _progress(existing),
                    },
                    status_code=409,
                )
            session = state._new_session(subject_id)
        return JSONResponse(
            {"session_id": session.session_id, "n_trials": session.n_trials},
            status_code=201,
        )

    @app.get("/api/sessions/{session_id}/next")
    def next_trial(session_id: str):
        session = state.sessions.get(session_id)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        with state.lock:
            if session.status == "complete":
                return {"status": "complete", "progress": _progress(session)}
            trial_id = session.current_trial_id()
            trial = state.trials[trial_id]
            return {
                "trial_id": trial_id,
                "composite_image_url": f"/api/trials/{trial_id}/composite.png",
                "original_image_url": f"/api/images/{trial.image_id}.png",
                "progress": _progress(session),
            }

    @app.post("/api/sessions/{session_id}/response")
    async def submit_response(session_id: str, request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "malformed JSON body"}, status_code=400)
        if not isinstance(body, dict):
            return JSONResponse({"error": "body must be a JSON object"}, status_code=400)
        trial_id = body.get("trial_id")
        choice = body.get("choice")
        rt_ms = body.get("rt_ms")
        if not isinstance(trial_id, str) or not isinstance(choice, str):
            return JSONResponse(
                {"error": "trial_id and choice must be strings"}, status_code=400
            )
        if not isinstance(rt_ms, (int, float)) or isinstance(rt_ms, bool) or rt_ms < 0:
            return JSONResponse(
                {"error": "rt_ms must be a nonnegative number"}, status_code=400
            )
        if choice not in CHOICES:
            return JSONResponse(
                {"error": f"choice must be one of {list(CHOICES)}"}, status_code=422
            )
        session = state.sessions.get(session_id)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)

        with state.lock:
            if session.status == "complete":
                return JSONResponse(
                    {"error": "session is complete", "next_available": False},
                    status_code=409,
                )
            expected = session.current_trial_id()
            if trial_id != expected:
                answered = trial_id in session.trial_order[: session.cursor]
                detail = "duplicate response" if answered else f"expected trial {expected}"
                return JSONResponse(
                    {
                        "error": detail,
                        "duplicate": answered,
                        "next_available": True,
                        "progress": _progress(session),
                    },
                    status_code=409,
                )
            record = ResponseRecord(
                trial_id=trial_id,
                subject_id=session.subject_id,
                choice=choice,
                response_time_ms=float(rt_ms),
                timestamp=time.time(),
            )
            append_response(record, state.journal_path)
            record_response(session, record)
            return {
                "accepted": True,
                "next_available": session.status == "active",
                "progress": _progress(session),
            }

    @app.get("/api/sessions/{session_id}/summary")
    def session_summary(session_id: str):
        session = state.sessions.get(session_id)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        with state.lock:
            return {
                "session_id": session.session_id,
                "subject_id": session.subject_id,
                "status": session.status,
                "done": session.cursor,
                "total": session.n_trials,
            }

    @app.get("/api/report")
    def report(pooling: str = "mode"):
        if pooling not in _POOLING_BY_QUERY:
            return JSONResponse(
                {"error": f"pooling must be one of {sorted(_POOLING_BY_QUERY)}"},
                status_code=400,
            )
        with state.lock:
            complete = [s for s in state.sessions.values() if s.status == "complete"]
            if not complete:
                return JSONResponse({"error": "no complete sessions"}, status_code=404)
            responses = [r for s in complete for r in s.responses]
        result = estimate_risk(
            list(state.trials.values()), responses, pooling=_POOLING_BY_QUERY[pooling]
        )
        return result.to_json_dict()

    @app.get("/api/trials/{trial_id}/composite.png")
    def composite_image(trial_id: str):
        data = state.composites.get(trial_id)
        if data is None:
            return JSONResponse({"error": "unknown trial"}, status_code=404)
        return Response(content=data, media_type="image/png")

    @app.get("/api/images/{image_id}.png")
    def original_image(image_id: str):
        data = state.originals.get(image_id)
        if data is None:
            return JSONResponse({"error": "unknown image"}, status_code=404)
        return Response(content=data, media_type="image/png")

    return app
