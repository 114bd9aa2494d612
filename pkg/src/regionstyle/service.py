"""Session-based HTTP service for the interactive pairing workflow.

A session holds a content image, a style image, and an ordered list of
committed mask pairs. Mask proposals are stateless (the client resends the
whole prompt set each refinement); stylize renders and caches the result
keyed by a hash of the session state, so repeating it on an unchanged
session returns the cached image.

Errors cross the wire as JSON {"error": <class name>, "message": ...} with
404 for unknown resources, 400 for malformed input, 422 for domain errors
(MaskTooSmall carries the offending pair index), 502 for remote-segmenter
failures.

Sessions live in memory; with a data directory configured every mutation
is mirrored to disk and sessions are re-hydrated on startup.
"""

from __future__ import annotations

import hashlib
import json
import secrets
import threading
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .codec import ModelParams
from .core import Image
from .errors import (
    BadImage,
    BadIndex,
    BadRequest,
    DegenerateRow,
    DimMismatch,
    MaskTooSmall,
    NotFound,
    ProtocolError,
    RegionStyleError,
    TransportError,
)
from .masks import Mask, MaskPair, MaskPairSet, rle_decode, rle_encode
from .pngio import read_png, write_png
from .segmenter import RemoteSegmenter, prompts_from_json, segment
from .stylizer import stylize

DEFAULT_PORT = 8675

_ROLES = ("content", "style")


@dataclass
class Session:
    id: str
    created: float
    updated: float
    images: dict = field(default_factory=dict)       # role -> Image
    image_bytes: dict = field(default_factory=dict)  # role -> uploaded PNG bytes
    pairs: list = field(default_factory=list)        # list[MaskPair]
    pair_rles: list = field(default_factory=list)    # list[{"content","style"}]
    result_png: bytes | None = None
    result_state: str | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def state_hash(self) -> str:
        digest = hashlib.sha256()
        for role in _ROLES:
            digest.update(role.encode())
            digest.update(self.image_bytes.get(role, b""))
        digest.update(json.dumps(self.pair_rles, sort_keys=True).encode())
        return digest.hexdigest()

    def summary(self) -> dict:
        dims = {
            role: None
            if role not in self.images
            else {"h": self.images[role].height, "w": self.images[role].width}
            for role in _ROLES
        }
        return {
            "id": self.id,
            "content": dims["content"],
            "style": dims["style"],
            "pairs": len(self.pairs),
            "has_result": self.result_png is not None,
            "created": self.created,
            "updated": self.updated,
        }


class SessionStore:
    def __init__(self, data_dir: Path | None):
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}
        self.data_dir = data_dir
        if data_dir is not None:
            data_dir.mkdir(parents=True, exist_ok=True)
            self._rehydrate()

    def create(self) -> Session:
        with self._lock:
            sid = secrets.token_urlsafe(8)
            while sid in self._sessions:
                sid = secrets.token_urlsafe(8)
            now = time.time()
            session = Session(id=sid, created=now, updated=now)
            self._sessions[sid] = session
        self.persist(session)
        return session

    def get(self, sid: str) -> Session:
        with self._lock:
            try:
                return self._sessions[sid]
            except KeyError:
                raise NotFound(f"no session {sid!r}")

    # -- optional directory mirror --

    def persist(self, session: Session) -> None:
        if self.data_dir is None:
            return
        root = self.data_dir / session.id
        root.mkdir(exist_ok=True)
        for role in _ROLES:
            if role in session.image_bytes:
                (root / f"{role}.png").write_bytes(session.image_bytes[role])
        (root / "pairs.json").write_text(json.dumps(session.pair_rles))
        if session.result_png is not None:
            (root / "result.png").write_bytes(session.result_png)
        meta = {
            "id": session.id,
            "created": session.created,
            "updated": session.updated,
            "result_state": session.result_state,
        }
        (root / "meta.json").write_text(json.dumps(meta))

    def _rehydrate(self) -> None:
        for root in sorted(self.data_dir.iterdir()):
            meta_path = root / "meta.json"
            if not meta_path.is_file():
                continue
            try:
                meta = json.loads(meta_path.read_text())
                session = Session(
                    id=meta["id"],
                    created=meta["created"],
                    updated=meta["updated"],
                    result_state=meta.get("result_state"),
                )
                for role in _ROLES:
                    png_path = root / f"{role}.png"
                    if png_path.is_file():
                        data = png_path.read_bytes()
                        session.image_bytes[role] = data
                        session.images[role] = read_png(data)
                pairs_path = root / "pairs.json"
                if pairs_path.is_file():
                    for entry in json.loads(pairs_path.read_text()):
                        session.pair_rles.append(entry)
                        session.pairs.append(
                            MaskPair(
                                rle_decode(entry["content"]),
                                rle_decode(entry["style"]),
                            )
                        )
                result_path = root / "result.png"
                if result_path.is_file():
                    session.result_png = result_path.read_bytes()
            except Exception as exc:
                warnings.warn(f"skipping unreadable session dir {root}: {exc}")
                continue
            self._sessions[session.id] = session


def _parse_json(body: bytes) -> dict:
    try:
        obj = json.loads(body)
    except (ValueError, UnicodeDecodeError) as exc:
        raise BadRequest(f"body is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise BadRequest("body must be a JSON object")
    return obj


def create_app(
    model: ModelParams,
    segment_url: str | None = None,
    data_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="regionstyle", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore(Path(data_dir) if data_dir is not None else None)
    remote = RemoteSegmenter(segment_url) if segment_url else None
    app.state.store = store
    app.state.model = model

    status_by_class = {
        NotFound: 404,
        BadImage: 400,
        BadRequest: 400,
        BadIndex: 400,
        TransportError: 502,
        ProtocolError: 502,
    }

    @app.exception_handler(RegionStyleError)
    def _on_error(request, exc: RegionStyleError):
        status = 422
        for cls, code in status_by_class.items():
            if isinstance(exc, cls):
                status = code
                break
        body = {"error": exc.name, "message": str(exc)}
        if isinstance(exc, MaskTooSmall) and exc.pair_index is not None:
            body["pair"] = exc.pair_index
        if isinstance(exc, DegenerateRow):
            body["row"] = exc.row
        return JSONResponse(status_code=status, content=body)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions")
    def create_session():
        session = store.create()
        return {"id": session.id}

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        session = store.get(sid)
        with session.lock:
            return session.summary()

    @app.put("/sessions/{sid}/images/{role}")
    async def put_image(sid: str, role: str, request: Request):
        body = await request.body()
        return await run_in_threadpool(_put_image, sid, role, body)

    def _put_image(sid: str, role: str, body: bytes):
        if role not in _ROLES:
            raise BadRequest(f"role must be one of {_ROLES}, got {role!r}")
        session = store.get(sid)
        image = read_png(body)
        with session.lock:
            pairs_cleared = bool(session.pairs) and role in session.images
            if role in session.images:
                # masks were drawn against the old raster; they cannot be
                # trusted against the new one even at identical dimensions
                session.pairs.clear()
                session.pair_rles.clear()
            session.images[role] = image
            session.image_bytes[role] = body
            session.updated = time.time()
            store.persist(session)
        return {"h": image.height, "w": image.width, "pairs_cleared": pairs_cleared}

    @app.post("/sessions/{sid}/masks/{role}")
    async def propose_mask(sid: str, role: str, request: Request):
        body = await request.body()
        return await run_in_threadpool(_propose_mask, sid, role, body)

    def _propose_mask(sid: str, role: str, body: bytes):
        if role not in _ROLES:
            raise BadRequest(f"role must be one of {_ROLES}, got {role!r}")
        session = store.get(sid)
        image = session.images.get(role)
        if image is None:
            raise NotFound(f"session has no {role} image yet")
        try:
            prompts = prompts_from_json(_parse_json(body))
        except (KeyError, TypeError, ValueError) as exc:
            raise BadRequest(f"malformed prompt set: {exc}") from exc
        if remote is not None and prompts.contour is None:
            mask = remote.segment(image, prompts)
        else:
            mask = segment(image, prompts)
        return rle_encode(mask)

    @app.post("/sessions/{sid}/pairs")
    async def commit_pair(sid: str, request: Request):
        body = await request.body()
        return await run_in_threadpool(_commit_pair, sid, body)

    def _commit_pair(sid: str, body: bytes):
        obj = _parse_json(body)
        session = store.get(sid)
        masks: dict[str, Mask] = {}
        rles: dict[str, dict] = {}
        for role in _ROLES:
            if role not in obj:
                raise BadRequest(f"pair body is missing the {role!r} mask")
            try:
                masks[role] = rle_decode(obj[role])
            except (KeyError, TypeError, ValueError) as exc:
                raise BadRequest(f"malformed {role} mask: {exc}") from exc
            rles[role] = rle_encode(masks[role])
        with session.lock:
            for role in _ROLES:
                image = session.images.get(role)
                if image is None:
                    raise BadRequest(f"session has no {role} image yet")
                mask = masks[role]
                if (mask.height, mask.width) != (image.height, image.width):
                    raise DimMismatch(
                        f"{role} mask is {mask.height}x{mask.width}, "
                        f"image is {image.height}x{image.width}"
                    )
            session.pairs.append(MaskPair(masks["content"], masks["style"]))
            session.pair_rles.append(rles)
            session.updated = time.time()
            store.persist(session)
            return {"index": len(session.pairs) - 1}

    @app.delete("/sessions/{sid}/pairs/{index}")
    def remove_pair(sid: str, index: int):
        session = store.get(sid)
        with session.lock:
            if not 0 <= index < len(session.pairs):
                raise BadIndex(
                    f"pair index {index} out of range ({len(session.pairs)} pairs)"
                )
            session.pairs.pop(index)
            session.pair_rles.pop(index)
            session.updated = time.time()
            store.persist(session)
        return {"ok": True}

    @app.post("/sessions/{sid}/stylize")
    def run_stylize(sid: str):
        session = store.get(sid)
        with session.lock:
            for role in _ROLES:
                if role not in session.images:
                    raise BadRequest(f"session has no {role} image yet")
            state = session.state_hash()
            if state == session.result_state and session.result_png is not None:
                return {"result": f"/sessions/{sid}/result", "cached": True}
            result = stylize(
                session.images["content"],
                session.images["style"],
                MaskPairSet(tuple(session.pairs)),
                model,
            )
            session.result_png = write_png(result)
            session.result_state = state
            session.updated = time.time()
            store.persist(session)
        return {"result": f"/sessions/{sid}/result", "cached": False}

    @app.get("/sessions/{sid}/result")
    def get_result(sid: str):
        session = store.get(sid)
        with session.lock:
            if session.result_png is None:
                raise NotFound("session has no stylized result yet")
            return Response(content=session.result_png, media_type="image/png")

    return app
