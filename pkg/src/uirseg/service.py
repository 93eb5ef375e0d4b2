"""HTTP session service for the live click-and-see loop.

One session per uploaded image. Every click triggers a full recomputation:
click-distance maps, a forward pass, thresholding and (when proposals are
attached) caption fusion. Responses are a pure function of (checkpoint, image,
ordered seeds, proposals), so replaying the same clicks yields byte-identical
payloads.
"""

from __future__ import annotations

import base64
import io
import json
import threading
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from pydantic import BaseModel

from PIL import Image

from .fusion import RegionProposal, best_match, load_proposals
from .imagecore import BinaryMask, BoundingBox, FormatError, ImageRGB, mask_bbox
from .interaction import NEGATIVE, POSITIVE, Seed, TrainingPair, VoronoiMap, compute_voronoi
from .network import Network, build_input, load_checkpoint, predict_mask

DEFAULT_PORT = 8737
DEFAULT_SESSION_CAP = 64


class CreateSessionBody(BaseModel):
    image: str  # base64 PNG
    proposals: list[dict] | None = None


class AddSeedBody(BaseModel):
    x: int
    y: int
    polarity: str


@dataclass
class SessionState:
    image: ImageRGB
    seeds: list[Seed] = field(default_factory=list)
    proposals: list[RegionProposal] | None = None
    last_response: dict | None = None
    last_prob: np.ndarray | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


def _png_b64_gray(values: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(values.astype(np.uint8), mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _decode_png(b64: str) -> ImageRGB:
    try:
        raw = base64.b64decode(b64, validate=True)
        img = Image.open(io.BytesIO(raw))
        if img.format != "PNG":
            raise FormatError("not a PNG")
        if img.mode == "L":
            img = img.convert("RGB")
        if img.mode != "RGB":
            raise FormatError(f"unsupported PNG mode {img.mode!r}")
        img.load()
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"could not decode image: {exc}") from exc
    return ImageRGB(np.asarray(img, dtype=np.uint8))


class SessionService:
    """Session store plus inference plumbing behind the HTTP handlers."""

    def __init__(self, net: Network, session_cap: int = DEFAULT_SESSION_CAP):
        self.net = net
        self.session_cap = session_cap
        self.sessions: OrderedDict[str, SessionState] = OrderedDict()
        self._lock = threading.Lock()

    def _get(self, session_id: str) -> SessionState:
        with self._lock:
            if session_id not in self.sessions:
                raise HTTPException(404, f"unknown session {session_id}")
            self.sessions.move_to_end(session_id)
            return self.sessions[session_id]

    def create(self, image: ImageRGB,
               proposals: list[RegionProposal] | None) -> str:
        stride = self.net.config.output_stride
        if image.width % stride or image.height % stride:
            raise HTTPException(
                400, f"image dimensions must be multiples of {stride}, "
                     f"got {image.width}x{image.height}")
        session_id = uuid.uuid4().hex
        state = SessionState(image=image, proposals=proposals)
        with state.lock:
            self._recompute(state)
        with self._lock:
            self.sessions[session_id] = state
            while len(self.sessions) > self.session_cap:
                self.sessions.popitem(last=False)  # evict least recently used
        return session_id

    def _recompute(self, state: SessionState) -> dict:
        img = state.image
        pos = [s for s in state.seeds if s.polarity == POSITIVE]
        neg = [s for s in state.seeds if s.polarity == NEGATIVE]
        pair = TrainingPair(
            img,
            compute_voronoi(pos, img.width, img.height),
            compute_voronoi(neg, img.width, img.height),
            BinaryMask(np.zeros((img.height, img.width), bool)),
        )
        prob = self.net.forward(build_input(pair))
        mask = predict_mask(prob)
        response = {
            "prob_png": _png_b64_gray(np.round(prob * 255.0)),
            "mask_png": _png_b64_gray(np.where(mask.bits, 255, 0)),
            "mask_box": None,
            "caption": None,
            "iou": None,
            "seeds": [[s.x, s.y, s.polarity] for s in state.seeds],
        }
        if not mask.is_empty():
            box = mask_bbox(mask)
            response["mask_box"] = [box.x, box.y, box.w, box.h]
            if state.proposals:
                result = best_match(mask, state.proposals)
                response["caption"] = result.caption
                response["iou"] = result.iou
        state.last_response = response
        state.last_prob = prob
        return response

    def add_seed(self, session_id: str, x: int, y: int, polarity: str) -> dict:
        state = self._get(session_id)
        with state.lock:
            img = state.image
            if polarity not in (POSITIVE, NEGATIVE):
                raise HTTPException(422, f"bad polarity {polarity!r}")
            if not (0 <= x < img.width and 0 <= y < img.height):
                raise HTTPException(422, f"click ({x}, {y}) outside "
                                         f"{img.width}x{img.height} image")
            state.seeds.append(Seed(x, y, polarity))
            return self._recompute(state)

    def undo_seed(self, session_id: str) -> dict:
        state = self._get(session_id)
        with state.lock:
            if not state.seeds:
                raise HTTPException(409, "no seeds to undo")
            state.seeds.pop()
            return self._recompute(state)

    def get_result(self, session_id: str) -> dict:
        state = self._get(session_id)
        with state.lock:
            return state.last_response

    def get_prob_f32(self, session_id: str) -> bytes:
        state = self._get(session_id)
        with state.lock:
            return state.last_prob.astype("<f4").tobytes()

    def delete(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self.sessions:
                raise HTTPException(404, f"unknown session {session_id}")
            del self.sessions[session_id]


def create_app(checkpoint_path=None, net: Network | None = None,
               session_cap: int = DEFAULT_SESSION_CAP,
               static_dir=None) -> FastAPI:
    if net is None:
        if checkpoint_path is None:
            raise ValueError("service needs a checkpoint or a network")
        net = load_checkpoint(checkpoint_path)
    service = SessionService(net, session_cap)
    app = FastAPI(title="uirseg")
    app.state.service = service

    @app.post("/api/sessions")
    def create_session(body: CreateSessionBody):
        try:
            image = _decode_png(body.image)
        except (FormatError, ValueError) as exc:
            raise HTTPException(400, str(exc))
        proposals = None
        if body.proposals is not None:
            try:
                proposals = load_proposals(io.StringIO(json.dumps(body.proposals)))
            except ValueError as exc:
                raise HTTPException(400, f"bad proposals: {exc}")
        return {"id": service.create(image, proposals)}

    @app.post("/api/sessions/{session_id}/seeds")
    def add_seed(session_id: str, body: AddSeedBody):
        return service.add_seed(session_id, body.x, body.y, body.polarity)

    @app.post("/api/sessions/{session_id}/undo")
    def undo(session_id: str):
        return service.undo_seed(session_id)

    @app.get("/api/sessions/{session_id}/result")
    def result(session_id: str, format: str = Query(default="json")):
        if format == "f32":
            return Response(service.get_prob_f32(session_id),
                            media_type="application/octet-stream")
        return service.get_result(session_id)

    @app.delete("/api/sessions/{session_id}")
    def delete(session_id: str):
        service.delete(session_id)
        return {"deleted": session_id}

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
