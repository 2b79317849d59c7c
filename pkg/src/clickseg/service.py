"""Session-based HTTP inference service.

A session holds one uploaded slice, an append-only click list and the full
revision history of predicted masks. Every accepted click re-renders the
guidance from all session clicks and re-runs the model, so the mask stored
for revision r is exactly the model output for the click list at revision r
(replayable). Undo never mutates history: it appends a new revision whose
click list is a truncated copy, recomputed through the model.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from . import network
from .errors import (BadImage, ClickSegError, FileMissing, InvalidParams,
                     OutOfBounds, UnknownCheckpoint, UnknownRevision,
                     UnknownSession)
from .guidance import (Click, ClickSet, ClickSizePolicy, Polarity, SizeMode,
                       compute_click_size)
from .harness import infer_mask
from .losses import dsc

_STATUS = {
    "BadImage": 400,
    "FileMissing": 404,
    "UnknownCheckpoint": 404,
    "UnknownSession": 404,
    "UnknownRevision": 404,
    "OutOfBounds": 422,
    "InvalidParams": 422,
    "EmptyMask": 422,
}


@dataclass
class Settings:
    """Service configuration; environment variables override file values."""

    checkpoint_dir: str = "checkpoints"
    session_ttl_s: float = 3600.0
    host: str = "127.0.0.1"
    port: int = 8000
    static_dir: Optional[str] = None

    @classmethod
    def from_sources(cls, cfg: Optional[dict] = None) -> "Settings":
        kw = {k: v for k, v in (cfg or {}).items() if v is not None}
        env = os.environ
        if "CLICKSEG_CHECKPOINT_DIR" in env:
            kw["checkpoint_dir"] = env["CLICKSEG_CHECKPOINT_DIR"]
        if "CLICKSEG_SESSION_TTL" in env:
            kw["session_ttl_s"] = float(env["CLICKSEG_SESSION_TTL"])
        if "CLICKSEG_HOST" in env:
            kw["host"] = env["CLICKSEG_HOST"]
        if "CLICKSEG_PORT" in env:
            kw["port"] = int(env["CLICKSEG_PORT"])
        if "CLICKSEG_STATIC_DIR" in env:
            kw["static_dir"] = env["CLICKSEG_STATIC_DIR"]
        return cls(**kw)


@dataclass
class Revision:
    """Immutable snapshot: the click list and the mask it produced."""

    clicks: tuple
    mask: np.ndarray
    applied_size: Optional[int] = None
    dsc_value: Optional[float] = None


@dataclass
class Session:
    session_id: str
    image: np.ndarray
    gt_mask: Optional[np.ndarray]
    policy: ClickSizePolicy
    checkpoint_id: str
    revisions: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_used: float = field(default_factory=time.monotonic)

    @property
    def revision(self) -> int:
        return len(self.revisions) - 1

    @property
    def current(self) -> Revision:
        return self.revisions[-1]


def _decode_image(data: bytes) -> np.ndarray:
    """Decode an uploaded image to float32 in [0, 1]."""
    from PIL import Image

    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise BadImage(f"cannot decode image: {exc}")
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = np.asarray(img.convert("L"))
    if arr.dtype == np.uint8:
        return arr.astype(np.float32) / 255.0
    if arr.dtype == np.uint16:
        return arr.astype(np.float32) / 65535.0
    arr = arr.astype(np.float32)
    hi = float(arr.max())
    return arr / hi if hi > 1.0 else arr


def _encode_mask_png(mask: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray((mask.astype(np.uint8)) * 255, mode="L").save(buf, "PNG")
    return buf.getvalue()


def mask_digest(mask: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(b"%dx%d:" % mask.shape)
    h.update(np.ascontiguousarray(mask.astype(np.uint8)).tobytes())
    return h.hexdigest()


class ModelRegistry:
    """Loads checkpoints from a directory, caching by id (file stem)."""

    def __init__(self, checkpoint_dir):
        self.dir = Path(checkpoint_dir)
        self._cache: dict = {}
        self._lock = threading.Lock()

    def list(self) -> list[dict]:
        out = []
        for path in sorted(self.dir.glob("*.npz")):
            try:
                meta = network.checkpoint_meta(path)
            except Exception:
                continue
            out.append({"id": path.stem,
                        "digest": network.checkpoint_digest(path),
                        "meta": meta.get("training_meta", {})})
        return out

    def default_id(self) -> str:
        entries = sorted(self.dir.glob("*.npz"))
        if not entries:
            raise UnknownCheckpoint(f"no checkpoints in {self.dir}")
        return entries[0].stem

    def get(self, checkpoint_id: str):
        with self._lock:
            if checkpoint_id not in self._cache:
                path = self.dir / f"{checkpoint_id}.npz"
                if not path.exists():
                    raise UnknownCheckpoint(f"no checkpoint {checkpoint_id!r}")
                model, _ = network.load_checkpoint(path)
                self._cache[checkpoint_id] = model
            return self._cache[checkpoint_id]


class ServiceState:
    def __init__(self, settings: Settings):
        self.settings = settings
        self.registry = ModelRegistry(settings.checkpoint_dir)
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def _sweep(self) -> None:
        ttl = self.settings.session_ttl_s
        now = time.monotonic()
        stale = [sid for sid, s in self.sessions.items()
                 if now - s.last_used > ttl]
        for sid in stale:
            self.sessions.pop(sid, None)

    def put(self, session: Session) -> None:
        with self._lock:
            self._sweep()
            self.sessions[session.session_id] = session

    def get(self, session_id: str) -> Session:
        with self._lock:
            self._sweep()
            if session_id not in self.sessions:
                raise UnknownSession(f"no session {session_id!r}")
            s = self.sessions[session_id]
            s.last_used = time.monotonic()
            return s


def _predict(state: ServiceState, session: Session,
             clicks: tuple) -> np.ndarray:
    model = state.registry.get(session.checkpoint_id)
    click_set = ClickSet(list(clicks), interaction_count=len(clicks))
    _, mask = infer_mask(model, model.spec, session.image, click_set)
    return mask


def _next_click_size(session: Session) -> int:
    """Size for the incoming click: the fixed default unless the policy is
    dynamic and the current mask is nonempty (then alpha * mask pixels)."""
    policy = session.policy
    if policy.mode is SizeMode.FIXED:
        return policy.fixed_size_px
    count = int(np.count_nonzero(session.current.mask))
    if count == 0:
        return policy.fixed_size_px
    return compute_click_size(policy.alpha, count, policy)


def _revision_payload(session: Session, rev_index: int) -> dict:
    rev = session.revisions[rev_index]
    h, w = session.image.shape
    payload = {
        "session_id": session.session_id,
        "revision": rev_index,
        "width": w,
        "height": h,
        "n_clicks": len(rev.clicks),
        "clicks": [{"row": c.row, "col": c.col, "polarity": c.polarity.value,
                    "size_px": c.size_px} for c in rev.clicks],
        "applied_click_size": rev.applied_size,
        "mask_png_b64": base64.b64encode(_encode_mask_png(rev.mask)).decode(),
        "mask_digest": mask_digest(rev.mask),
        "policy": session.policy.to_dict(),
        "checkpoint": session.checkpoint_id,
    }
    if rev.dsc_value is not None:
        payload["dsc"] = rev.dsc_value
    return payload


def create_app(settings: Optional[Settings] = None) -> FastAPI:
    """Build the FastAPI application."""
    settings = settings or Settings.from_sources()
    state = ServiceState(settings)
    app = FastAPI(title="clickseg", version="0.1.0")
    app.state.clickseg = state
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(ClickSegError)
    async def _handle(request: Request, exc: ClickSegError):
        code = type(exc).__name__
        return JSONResponse(status_code=_STATUS.get(code, 500),
                            content={"code": code, "message": str(exc)})

    @app.get("/checkpoints")
    def list_checkpoints():
        return {"checkpoints": state.registry.list()}

    @app.post("/sessions")
    def create_session(image: UploadFile = File(...),
                       gt: Optional[UploadFile] = File(None),
                       policy: Optional[str] = Form(None),
                       checkpoint: Optional[str] = Form(None)):
        img = _decode_image(image.file.read())
        if img.ndim != 2 or img.shape[0] < 16 or img.shape[1] < 16:
            raise BadImage(f"need a 2D image of at least 16x16, got {img.shape}")
        gt_mask = None
        if gt is not None:
            gt_arr = _decode_image(gt.file.read())
            if gt_arr.shape != img.shape:
                raise BadImage("ground-truth mask shape differs from image")
            gt_mask = (gt_arr > 0.5).astype(np.uint8)
        try:
            pol = (ClickSizePolicy.from_dict(json.loads(policy))
                   if policy else ClickSizePolicy())
        except ClickSegError:
            raise
        except Exception as exc:
            raise InvalidParams(f"bad policy JSON: {exc}")
        ckpt = checkpoint or state.registry.default_id()
        state.registry.get(ckpt)  # validate before creating any state

        session = Session(session_id=uuid.uuid4().hex, image=img,
                          gt_mask=gt_mask, policy=pol, checkpoint_id=ckpt)
        mask = _predict(state, session, ())
        score = dsc(mask, gt_mask) if gt_mask is not None else None
        session.revisions.append(Revision(clicks=(), mask=mask,
                                          dsc_value=score))
        state.put(session)
        return _revision_payload(session, 0)

    @app.post("/sessions/{session_id}/clicks")
    def add_click(session_id: str, body: dict):
        session = state.get(session_id)
        with session.lock:
            for key in ("row", "col", "polarity"):
                if key not in body:
                    raise InvalidParams(f"missing field {key!r}")
            row, col = int(body["row"]), int(body["col"])
            h, w = session.image.shape
            if not (0 <= row < h and 0 <= col < w):
                raise OutOfBounds(f"click ({row}, {col}) outside {h}x{w}")
            polarity = Polarity(body["polarity"])
            size = _next_click_size(session)
            clicks = session.current.clicks + (
                Click(row, col, polarity, size),)
            mask = _predict(state, session, clicks)
            score = (dsc(mask, session.gt_mask)
                     if session.gt_mask is not None else None)
            session.revisions.append(Revision(clicks=clicks, mask=mask,
                                              applied_size=size,
                                              dsc_value=score))
            return _revision_payload(session, session.revision)

    @app.post("/sessions/{session_id}/undo")
    def undo(session_id: str):
        session = state.get(session_id)
        with session.lock:
            current = session.current.clicks
            if not current:
                raise InvalidParams("nothing to undo")
            clicks = current[:-1]
            mask = _predict(state, session, clicks)
            score = (dsc(mask, session.gt_mask)
                     if session.gt_mask is not None else None)
            size = clicks[-1].size_px if clicks else None
            session.revisions.append(Revision(clicks=clicks, mask=mask,
                                              applied_size=size,
                                              dsc_value=score))
            return _revision_payload(session, session.revision)

    @app.get("/sessions/{session_id}/mask")
    def get_mask(session_id: str, request: Request,
                 revision: Optional[int] = None):
        session = state.get(session_id)
        with session.lock:
            rev_index = session.revision if revision is None else revision
            if not (0 <= rev_index <= session.revision):
                raise UnknownRevision(
                    f"revision {rev_index} not in [0, {session.revision}]")
            if "image/png" in request.headers.get("accept", ""):
                png = _encode_mask_png(session.revisions[rev_index].mask)
                return Response(content=png, media_type="image/png")
            return _revision_payload(session, rev_index)

    if settings.static_dir and Path(settings.static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=settings.static_dir,
                                     html=True), name="ui")

    return app
