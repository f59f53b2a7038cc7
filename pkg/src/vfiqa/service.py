"""Annotation service: hands unlabeled triplets to annotators, persists
their judgments in an append-only log, and finalizes h once three
distinct annotators have voted.

State is fully reconstructable by replaying the judgment log, so a crash
between requests loses nothing but in-flight assignments.
"""

from __future__ import annotations

import hashlib
import re
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .data import (
    Choice,
    Judgment,
    Triplet,
    aggregate_judgments,
    append_judgment,
    quantize_h,
    read_judgments,
    read_manifest,
    write_manifest,
)

PLAYBACK_FPS = 2
PLAYBACK_FRAMES = 12

_ANNOTATOR_RE = re.compile(r"^[A-Za-z0-9_.-]{1,64}$")


class UnknownSessionError(ValueError):
    pass


class UnknownTripletError(KeyError):
    pass


class DuplicateJudgmentError(ValueError):
    pass


class NotInFlightError(ValueError):
    pass


def _clip_id(path: str) -> str:
    return hashlib.sha1(path.encode("utf-8")).hexdigest()[:12]


class AnnotationStore:
    """Queue state over a manifest plus an append-only judgment log."""

    def __init__(self, manifest_path: str | Path, judgments_path: str | Path,
                 clip_root: str | Path | None = None):
        self.manifest_path = Path(manifest_path)
        self.judgments_path = Path(judgments_path)
        self.clip_root = Path(clip_root) if clip_root else self.manifest_path.parent
        self._lock = threading.Lock()
        self.triplets: dict[str, Triplet] = {}
        self.order: list[str] = []
        for t in read_manifest(self.manifest_path):
            self.triplets[t.id] = t
            self.order.append(t.id)
        self.clips: dict[str, Path] = {}
        for t in self.triplets.values():
            for ref in (t.a, t.b, t.ref):
                p = Path(ref)
                self.clips[_clip_id(ref)] = p if p.is_absolute() else self.clip_root / p
        # judged[tid] maps annotator -> Judgment, rebuilt from the log
        self.judged: dict[str, dict[str, Judgment]] = {tid: {} for tid in self.triplets}
        for j in read_judgments(self.judgments_path):
            if j.triplet_id in self.judged:
                self.judged[j.triplet_id][j.annotator_id] = j
        self.in_flight: dict[str, str] = {}  # annotator -> triplet id

    # ---- queue ------------------------------------------------------------------

    def counts(self) -> dict[str, int]:
        return {tid: len(v) for tid, v in self.judged.items()}

    def finalized(self, tid: str) -> bool:
        return len(self.judged[tid]) >= 3

    def remaining_for(self, annotator: str) -> int:
        return sum(1 for tid in self.order if self._eligible(tid, annotator))

    def _eligible(self, tid: str, annotator: str) -> bool:
        votes = self.judged[tid]
        if annotator in votes or len(votes) >= 3:
            return False
        reserved = sum(1 for a, t in self.in_flight.items() if t == tid and a != annotator)
        return len(votes) + reserved < 3

    def next_for(self, annotator: str) -> Triplet | None:
        if not _ANNOTATOR_RE.match(annotator or ""):
            raise UnknownSessionError(f"invalid annotator id {annotator!r}")
        with self._lock:
            current = self.in_flight.get(annotator)
            if current is not None and self._eligible(current, annotator):
                return self.triplets[current]
            candidates = [
                (len(self.judged[tid]), idx, tid)
                for idx, tid in enumerate(self.order)
                if self._eligible(tid, annotator)
            ]
            if not candidates:
                self.in_flight.pop(annotator, None)
                return None
            _, _, tid = min(candidates)
            self.in_flight[annotator] = tid
            return self.triplets[tid]

    def record(self, annotator: str, triplet_id: str, choice: Choice) -> tuple[bool, float | None]:
        if not _ANNOTATOR_RE.match(annotator or ""):
            raise UnknownSessionError(f"invalid annotator id {annotator!r}")
        with self._lock:
            if triplet_id not in self.triplets:
                raise UnknownTripletError(triplet_id)
            votes = self.judged[triplet_id]
            if annotator in votes:
                raise DuplicateJudgmentError(f"{annotator} already judged {triplet_id}")
            if self.in_flight.get(annotator) != triplet_id:
                raise NotInFlightError(f"{triplet_id} is not assigned to {annotator}")
            if len(votes) >= 3:
                raise DuplicateJudgmentError(f"{triplet_id} already holds 3 judgments")
            judgment = Judgment(triplet_id=triplet_id, annotator_id=annotator, choice=choice)
            append_judgment(self.judgments_path, judgment)
            votes[annotator] = judgment
            self.in_flight.pop(annotator, None)
            if len(votes) == 3:
                h = quantize_h(aggregate_judgments(list(votes.values())))
                trip = self.triplets[triplet_id]
                trip.h = h
                trip.source = "human"
                write_manifest(self.manifest_path, [self.triplets[t] for t in self.order])
                return True, h
            return False, None

    def clip_path(self, clip_id: str) -> Path:
        if clip_id not in self.clips:
            raise UnknownTripletError(clip_id)
        return self.clips[clip_id]

    def frame_urls(self, clip_ref: str) -> list[str]:
        cid = _clip_id(clip_ref)
        return [f"/clips/{cid}/frame_{i:03d}.png" for i in range(PLAYBACK_FRAMES)]


class JudgmentRequest(BaseModel):
    session: str
    triplet_id: str
    choice: Choice


def build_app(store: AnnotationStore, frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="vfiqa annotation service")

    @app.get("/api/session/{annotator}/next")
    def next_triplet(annotator: str):
        try:
            trip = store.next_for(annotator)
        except UnknownSessionError as err:
            raise HTTPException(status_code=401, detail=str(err))
        if trip is None:
            return {"triplet": None, "none_remaining": True}
        return {
            "triplet": {
                "id": trip.id,
                "frames": {
                    "a": store.frame_urls(trip.a),
                    "b": store.frame_urls(trip.b),
                    "ref": store.frame_urls(trip.ref),
                },
                "playback": {"fps": PLAYBACK_FPS, "frames": PLAYBACK_FRAMES},
            },
            "none_remaining": False,
        }

    @app.post("/api/judgment")
    def record_judgment(req: JudgmentRequest):
        try:
            finalized, h = store.record(req.session, req.triplet_id, req.choice)
        except UnknownSessionError as err:
            raise HTTPException(status_code=401, detail=str(err))
        except UnknownTripletError as err:
            raise HTTPException(status_code=404, detail=f"unknown triplet {err}")
        except (DuplicateJudgmentError, NotInFlightError) as err:
            raise HTTPException(status_code=409, detail=str(err))
        return {"finalized": finalized, "h": h}

    @app.get("/clips/{clip_id}/frame_{index}.png")
    def clip_frame(clip_id: str, index: int):
        try:
            clip_dir = store.clip_path(clip_id)
        except UnknownTripletError:
            raise HTTPException(status_code=404, detail="unknown clip")
        for width in range(3, 10):
            candidate = clip_dir / f"frame_{index:0{width}d}.png"
            if candidate.exists():
                return FileResponse(candidate, media_type="image/png")
        raise HTTPException(status_code=404, detail=f"frame {index} not found")

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")
    return app


def serve(manifest: str | Path, judgments: str | Path, port: int,
          frontend_dir: str | Path | None = None, host: str = "127.0.0.1") -> None:
    import uvicorn

    store = AnnotationStore(manifest, judgments)
    uvicorn.run(build_app(store, frontend_dir), host=host, port=port)
