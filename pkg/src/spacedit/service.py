"""JSON-over-HTTP editing service.

Images are content-addressed PNGs; every render is a pure function of
(checkpoint, style code), because renders use zero noise buffers and seeds
derive from the request parameters plus the checkpoint hash. Latent
optimizations (session creation, text edits) share one worker; at most
QUEUE_DEPTH jobs may be in flight before the service answers 409.
"""
from __future__ import annotations

import base64
import hashlib
import io
import json
import threading
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from PIL import Image
from pydantic import BaseModel, Field

from .editops import TAG_VOCAB, ImagePair
from .generator import GeneratorBundle
from .inversion import InversionConfig, average_codes, interpolate_codes, invert_identity
from .lgie import JointEmbedder, ZeroShotConfig, zero_shot_edit
from .spacesearch import CodeIndex, customized_purity, knn_query, spherical_kmeans, summarize_clusters
from .workspace import Workspace

QUEUE_DEPTH = 4


class QueueFullError(RuntimeError):
    pass


class OptimizationQueue:
    """Single worker; up to `depth` jobs in flight (running + waiting)."""

    def __init__(self, depth: int = QUEUE_DEPTH):
        self.depth = depth
        self._worker = threading.Lock()
        self._gate = threading.Lock()
        self._in_flight = 0

    def run(self, fn):
        with self._gate:
            if self._in_flight >= self.depth:
                raise QueueFullError(f"optimization queue full ({self.depth})")
            self._in_flight += 1
        try:
            with self._worker:
                return fn()
        finally:
            with self._gate:
                self._in_flight -= 1


def png_bytes(image: np.ndarray) -> bytes:
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    buf = io.BytesIO()
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise ValueError(f"not a decodable image: {exc}") from exc
    arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return arr


@dataclass
class EditSession:
    id: str
    image_id: str
    w0: np.ndarray
    identity_image_id: str
    identity_error: float
    history: list[dict] = field(default_factory=list)
    results: dict[str, np.ndarray] = field(default_factory=dict)  # result id -> w


@dataclass
class ServiceState:
    bundle: GeneratorBundle
    index: CodeIndex | None = None
    embedder: JointEmbedder | None = None
    pairs: dict[str, ImagePair] = field(default_factory=dict)
    workspace: Workspace | None = None
    identity_steps: int = 120
    zero_shot_steps: int = 80
    queue: OptimizationQueue = field(default_factory=OptimizationQueue)

    def __post_init__(self) -> None:
        self.checkpoint_hash = self.bundle.generator_hash()
        self.images: dict[str, bytes] = {}
        self.sessions: dict[str, EditSession] = {}
        self._session_lock = threading.Lock()
        self._session_counter = 0
        # full-magnitude codes for exemplar transfer
        self.codes: dict[str, np.ndarray] = (
            {} if self.index is None
            else {pid: e.w for pid, e in self.index.entries.items()}
        )

    # -- image store ---------------------------------------------------------

    def put_image_bytes(self, data: bytes) -> str:
        image_id = hashlib.sha1(data).hexdigest()[:16]
        if image_id not in self.images:
            self.images[image_id] = data
            if self.workspace is not None:
                store = self.workspace.sessions / "images"
                store.mkdir(parents=True, exist_ok=True)
                (store / f"{image_id}.png").write_bytes(data)
        return image_id

    def put_image(self, image: np.ndarray) -> str:
        return self.put_image_bytes(png_bytes(image))

    def get_array(self, image_id: str) -> np.ndarray:
        return decode_png(self.images[image_id])

    # -- sessions ------------------------------------------------------------

    def new_session_id(self) -> str:
        with self._session_lock:
            self._session_counter += 1
            return f"sess-{self._session_counter:06d}"

    def persist_session(self, session: EditSession) -> None:
        if self.workspace is None:
            return
        record = {
            "id": session.id,
            "image_id": session.image_id,
            "identity_image_id": session.identity_image_id,
            "identity_error": session.identity_error,
            "checkpoint_hash": self.checkpoint_hash,
            "w0": [float(x) for x in session.w0],
            "history": session.history,
        }
        path = self.workspace.sessions / f"{session.id}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _derived_seed(*parts: str) -> int:
    digest = hashlib.blake2s("\x1f".join(parts).encode()).digest()
    return int.from_bytes(digest[:4], "big")


class UploadBody(BaseModel):
    png_base64: str


class SessionBody(BaseModel):
    image_id: str


class EditTextBody(BaseModel):
    request: str = Field(min_length=1)
    lam: float = Field(default=0.3, ge=0.0, le=10.0, alias="lambda")
    alpha: float = Field(default=1.0, ge=-2.0, le=2.0)
    mask_id: str | None = None

    model_config = {"populate_by_name": True}


class EditExemplarBody(BaseModel):
    exemplar_ids: list[str] = Field(min_length=1)
    alpha: float = Field(default=1.0, ge=-2.0, le=2.0)


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="editing-space service")
    app.state.service = state
    res = state.bundle.config.resolution

    def get_session(session_id: str) -> EditSession:
        session = state.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return session

    def load_mask(mask_id: str | None) -> np.ndarray | None:
        if mask_id is None:
            return None
        if mask_id not in state.images:
            raise HTTPException(404, f"unknown mask image {mask_id!r}")
        mask = state.get_array(mask_id)[..., 0]
        if mask.shape != (res, res):
            raise HTTPException(422, f"mask must be {res}x{res}")
        return (mask > 0).astype(np.uint8)

    def queued(fn):
        try:
            return state.queue.run(fn)
        except QueueFullError as exc:
            raise HTTPException(409, str(exc)) from exc

    def render_result(session: EditSession, w_target: np.ndarray, alpha: float,
                      mask: np.ndarray | None) -> np.ndarray:
        source = state.get_array(session.image_id)
        w = interpolate_codes(session.w0, w_target, alpha)
        out = state.bundle.generate_from_w(source, w)
        if mask is not None:
            out = np.where(mask[..., None] > 0, out, source)
        return out

    @app.get("/health")
    def health():
        return {"status": "ok", "checkpoint_hash": state.checkpoint_hash}

    @app.post("/images")
    def upload_image(body: UploadBody):
        try:
            data = base64.b64decode(body.png_base64, validate=True)
            arr = decode_png(data)
        except (ValueError, OSError) as exc:
            raise HTTPException(422, str(exc)) from exc
        if arr.shape[:2] != (res, res):
            raise HTTPException(422, f"image must be {res}x{res}, got {arr.shape[:2]}")
        image_id = state.put_image_bytes(data)
        return {"image_id": image_id, "width": arr.shape[1], "height": arr.shape[0]}

    @app.get("/images/{image_id}")
    def get_image(image_id: str):
        data = state.images.get(image_id)
        if data is None:
            raise HTTPException(404, f"unknown image {image_id!r}")
        return Response(content=data, media_type="image/png")

    @app.post("/sessions")
    def create_session(body: SessionBody):
        if body.image_id not in state.images:
            raise HTTPException(404, f"unknown image {body.image_id!r}")
        image = state.get_array(body.image_id)

        def job():
            cfg = InversionConfig(
                steps=state.identity_steps,
                optimize_noise=False,  # renders must stay a pure function of w
                seed=_derived_seed(state.checkpoint_hash, body.image_id),
                mean_w_samples=2000,
            )
            return invert_identity(state.bundle, image, cfg)

        result = queued(job)
        session = EditSession(
            id=state.new_session_id(),
            image_id=body.image_id,
            w0=result.style.w,
            identity_image_id="",
            identity_error=result.final_error,
        )
        identity = state.bundle.generate_from_w(image, session.w0)
        session.identity_image_id = state.put_image(identity)
        state.sessions[session.id] = session
        state.persist_session(session)
        return {
            "session_id": session.id,
            "identity_image_id": session.identity_image_id,
            "identity_error": session.identity_error,
        }

    @app.post("/sessions/{session_id}/edit-text")
    def edit_text(session_id: str, body: EditTextBody):
        session = get_session(session_id)
        if state.embedder is None:
            raise HTTPException(422, "service is running without an embedder")
        mask = load_mask(body.mask_id)
        source = state.get_array(session.image_id)
        params = {
            "request": body.request,
            "lambda": body.lam,
            "alpha": body.alpha,
            "mask_id": body.mask_id,
        }
        seed = _derived_seed(state.checkpoint_hash, session.image_id,
                             json.dumps(params, sort_keys=True))

        def job():
            cfg = ZeroShotConfig(
                steps=state.zero_shot_steps, init="given", w_init=session.w0, seed=seed
            )
            return zero_shot_edit(
                state.bundle, state.embedder, source, body.request,
                body.lam, mask, cfg,
            )

        try:
            result = queued(job)
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc
        out = render_result(session, result.w, body.alpha, mask)
        image_id = state.put_image(out)
        result_id = f"r{len(session.history) + 1}"
        session.results[result_id] = result.w
        session.history.append(
            {
                "result_id": result_id,
                "kind": "text",
                "params": params,
                "image_id": image_id,
                "objective": result.objective,
                "seed": seed,
            }
        )
        state.persist_session(session)
        return {
            "result_id": result_id,
            "image_id": image_id,
            "objective": result.objective,
            "trace": result.trace,
        }

    @app.post("/sessions/{session_id}/edit-exemplar")
    def edit_exemplar(session_id: str, body: EditExemplarBody):
        session = get_session(session_id)
        missing = [e for e in body.exemplar_ids if e not in state.codes]
        if missing:
            raise HTTPException(404, f"unknown exemplar ids {missing}")
        w_target = average_codes([state.codes[e] for e in body.exemplar_ids])
        out = render_result(session, w_target, body.alpha, None)
        image_id = state.put_image(out)
        result_id = f"r{len(session.history) + 1}"
        session.results[result_id] = w_target
        session.history.append(
            {
                "result_id": result_id,
                "kind": "exemplar",
                "params": {"exemplar_ids": list(body.exemplar_ids), "alpha": body.alpha},
                "image_id": image_id,
            }
        )
        state.persist_session(session)
        return {"result_id": result_id, "image_id": image_id}

    @app.get("/interpolate")
    def interpolate(session: str, result: str, alpha: float):
        sess = get_session(session)
        if result not in sess.results:
            raise HTTPException(404, f"unknown result {result!r}")
        if not -2.0 <= alpha <= 2.0:
            raise HTTPException(422, "alpha out of range [-2, 2]")
        entry = next(h for h in sess.history if h["result_id"] == result)
        mask = load_mask(entry["params"].get("mask_id"))
        out = render_result(sess, sess.results[result], alpha, mask)
        return Response(content=png_bytes(out), media_type="image/png")

    @app.get("/retrieve")
    def retrieve(pair_id: str, k: int = 5):
        if state.index is None or len(state.index) == 0:
            raise HTTPException(422, "service is running without an index")
        entry = state.index.entries.get(pair_id)
        if entry is None:
            raise HTTPException(404, f"unknown pair {pair_id!r}")
        if not 1 <= k <= len(state.index) - 1:
            raise HTTPException(422, f"k must be in [1, {len(state.index) - 1}]")
        ranked = knn_query(state.index, entry.w_unit, min(k + 1, len(state.index)))
        ranked = [r for r in ranked if r[0] != pair_id][:k]
        return {
            "query": pair_id,
            "results": [
                {"id": rid, "similarity": sim, "tags": state.index.entries[rid].tags}
                for rid, sim in ranked
            ],
        }

    @app.get("/clusters")
    def clusters(k: int = 8, seed: int = 0):
        if state.index is None or len(state.index) == 0:
            raise HTTPException(422, "service is running without an index")
        if not 1 <= k <= len(state.index):
            raise HTTPException(422, f"k must be in [1, {len(state.index)}]")
        clustering = spherical_kmeans(state.index, k, seed=seed)
        summary = summarize_clusters(state.index, clustering)
        ids, _ = state.index.matrix()
        assignments = [clustering.assignments[i] for i in ids]
        tag_lists = [state.index.entries[i].tags for i in ids]
        purity = customized_purity(assignments, tag_lists, TAG_VOCAB)
        for cluster in summary["clusters"]:
            thumbs = []
            for pid in cluster["exemplars"]:
                pair = state.pairs.get(pid)
                if pair is not None:
                    thumbs.append(state.put_image(pair.after))
            cluster["thumbnails"] = thumbs
        return {"k": k, "purity": purity, "clusters": summary["clusters"]}

    return app
