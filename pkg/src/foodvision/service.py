"""HTTP recognition service: frame classification with stability debounce.

Clients post whole encoded camera frames (PPM or PNG) at a fixed interval;
the service classifies each frame in eval mode, applies a confidence
threshold plus a k-consecutive-frames stability rule per session, and serves
the food/nutrition records the overlay renders.  When the frame moves to a
different class or drops below the threshold after a stable classification,
the response carries ``reset=true`` so the client tears its overlay down.

Model parameters and the nutrition store are immutable shared state; session
states are independently locked, so requests for different sessions proceed
in parallel while requests within one session serialize.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .autograd import Tensor
from .data import decode_image_bytes, preprocess
from .errors import DecodeError
from .layers import softmax_probs
from .nutrition import FoodStore, nutrition_for_portion

UNKNOWN_CLASS = "unknown"

CONTENT_TYPE_CODECS = {
    "image/x-portable-pixmap": "ppm",
    "image/png": "png",
    "image/jpeg": "jpeg",
}


@dataclass
class ServiceConfig:
    threshold: float = 0.6
    stability_k: int = 2
    default_interval_ms: int = 500
    session_idle_seconds: float = 300.0


@dataclass
class ClassificationResult:
    """Wire-level answer for one frame."""

    class_id: int
    class_name: str
    confidence: float
    stable: bool
    reset: bool
    latency_ms: float
    frame_seq: int

    def to_dict(self) -> dict:
        return {
            "class_id": self.class_id,
            "class_name": self.class_name,
            "confidence": self.confidence,
            "stable": self.stable,
            "reset": self.reset,
            "latency_ms": self.latency_ms,
            "frame_seq": self.frame_seq,
        }


@dataclass
class SessionState:
    session_id: str
    last_class: Optional[int] = None
    consecutive_count: int = 0
    last_seen: float = 0.0
    frame_seq: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


@dataclass(frozen=True)
class StabilityStep:
    """Outcome of feeding one (class, confidence) observation to a session."""

    accepted_class: Optional[int]  # None when below threshold
    stable: bool
    reset: bool
    last_class: Optional[int]
    consecutive_count: int


def step_stability(last_class: Optional[int], consecutive_count: int,
                   class_id: int, confidence: float,
                   threshold: float, stability_k: int) -> StabilityStep:
    """Advance the per-session stability machine by one observation.

    Below-threshold confidence clears the tracked class and, if a class was
    previously stable, signals reset (the overlay's teardown edge).  An
    above-threshold observation of the same class as the previous one
    increments the consecutive counter; the classification becomes stable
    once the counter reaches ``stability_k``.  A class change restarts the
    counter at 1 and signals reset only if the previous class was stable.
    """
    was_stable = last_class is not None and consecutive_count >= stability_k
    if confidence < threshold:
        return StabilityStep(accepted_class=None, stable=False, reset=was_stable,
                             last_class=None, consecutive_count=0)
    if class_id == last_class:
        count = consecutive_count + 1
        return StabilityStep(accepted_class=class_id, stable=count >= stability_k,
                             reset=False, last_class=class_id, consecutive_count=count)
    return StabilityStep(accepted_class=class_id, stable=1 >= stability_k,
                         reset=was_stable, last_class=class_id, consecutive_count=1)


class RecognitionEngine:
    """Eval-mode classifier plus per-session stability state."""

    def __init__(self, model, class_names: list[str], config: ServiceConfig):
        self.model = model
        self.class_names = list(class_names)
        self.config = config
        self._sessions: dict[str, SessionState] = {}
        self._registry_lock = threading.Lock()

    def predict(self, frame: np.ndarray) -> tuple[int, float]:
        """(argmax class, max softmax probability) for one preprocessed frame."""
        logits = self.model.forward(Tensor(frame[None])).data[0]
        probs = softmax_probs(logits)
        class_id = int(np.argmax(probs))  # argmax ties break to the lowest index
        return class_id, float(probs[class_id])

    def session(self, session_id: str) -> SessionState:
        now = time.monotonic()
        with self._registry_lock:
            stale = [sid for sid, s in self._sessions.items()
                     if now - s.last_seen > self.config.session_idle_seconds]
            for sid in stale:
                del self._sessions[sid]
            state = self._sessions.get(session_id)
            if state is None:
                state = SessionState(session_id=session_id, last_seen=now)
                self._sessions[session_id] = state
            return state

    def classify_frame(self, frame_bytes: bytes, codec: str,
                       session_id: Optional[str] = None) -> ClassificationResult:
        """Decode, classify, and apply the stability rules for one frame.

        Without a session id the classification is stateless: stable simply
        means the confidence met the threshold, and reset is never signaled.
        """
        start = time.perf_counter()
        image = decode_image_bytes(frame_bytes, codec, source="<frame>")
        size = self.model.config.input_size[1]
        frame = preprocess(image, size=size)
        class_id, confidence = self.predict(frame)
        cfg = self.config

        if session_id is None:
            ok = confidence >= cfg.threshold
            return ClassificationResult(
                class_id=class_id if ok else -1,
                class_name=self.class_names[class_id] if ok else UNKNOWN_CLASS,
                confidence=confidence,
                stable=ok,
                reset=False,
                latency_ms=(time.perf_counter() - start) * 1000.0,
                frame_seq=0,
            )

        state = self.session(session_id)
        with state.lock:
            step = step_stability(state.last_class, state.consecutive_count,
                                  class_id, confidence, cfg.threshold, cfg.stability_k)
            state.last_class = step.last_class
            state.consecutive_count = step.consecutive_count
            state.last_seen = time.monotonic()
            state.frame_seq += 1
            seq = state.frame_seq
        known = step.accepted_class is not None
        return ClassificationResult(
            class_id=class_id if known else -1,
            class_name=self.class_names[class_id] if known else UNKNOWN_CLASS,
            confidence=confidence,
            stable=step.stable,
            reset=step.reset,
            latency_ms=(time.perf_counter() - start) * 1000.0,
            frame_seq=seq,
        )


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

def create_app(model, class_names: list[str], store: FoodStore,
               config: Optional[ServiceConfig] = None) -> FastAPI:
    """FastAPI application exposing the five v1 endpoints with CORS enabled."""
    config = config or ServiceConfig()
    engine = RecognitionEngine(model, class_names, config) if model is not None else None

    app = FastAPI(title="food recognition service", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.engine = engine
    app.state.store = store
    app.state.config = config

    def error(status: int, code: str, detail: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": code, "detail": detail})

    @app.get("/v1/health")
    def health():
        if engine is None:
            return error(503, "model_not_loaded", "no model is loaded")
        return {"status": "ok", "model": engine.model.name, "classes": len(engine.class_names)}

    @app.get("/v1/config")
    def get_config():
        return {
            "default_interval_ms": config.default_interval_ms,
            "threshold": config.threshold,
            "stability_k": config.stability_k,
            "classes": list(class_names),
        }

    @app.post("/v1/classify")
    async def classify(request: Request):
        if engine is None:
            return error(503, "model_not_loaded", "no model is loaded")
        content_type = request.headers.get("content-type", "").split(";")[0].strip().lower()
        codec = CONTENT_TYPE_CODECS.get(content_type)
        if codec is None:
            return error(415, "unsupported_media_type",
                         f"Content-Type must be one of {sorted(CONTENT_TYPE_CODECS)}, "
                         f"got {content_type!r}")
        body = await request.body()
        if not body:
            return error(400, "empty_body", "request body must contain the encoded frame")
        session_id = request.headers.get("x-session")
        try:
            result = engine.classify_frame(body, codec, session_id=session_id)
        except DecodeError as exc:
            return error(400, "decode_error", str(exc))
        return result.to_dict()

    @app.get("/v1/foods/{class_name}")
    def get_food(class_name: str):
        try:
            record = store.get(class_name)
        except KeyError:
            return error(404, "unknown_class", f"no food record for {class_name!r}")
        return record.to_dict()

    @app.get("/v1/foods/{class_name}/nutrition")
    def get_nutrition(class_name: str, portion_g: float = 100.0):
        if portion_g <= 0:
            return error(400, "invalid_portion", f"portion_g must be > 0, got {portion_g}")
        try:
            facts = nutrition_for_portion(store, class_name, portion_g)
        except KeyError:
            return error(404, "unknown_class", f"no food record for {class_name!r}")
        return {"class_name": class_name, "portion_g": portion_g, **facts.to_dict()}

    return app


def serve(checkpoint_path, store_path, host: str = "127.0.0.1", port: int = 8000,
          config: Optional[ServiceConfig] = None, manifest_path=None) -> None:
    """Load the checkpoint and store, then run the HTTP service (blocking).

    Class names come from the manifest when given, otherwise from the store
    record order; the model's class count must match.
    """
    import uvicorn

    from .data import DatasetManifest
    from .models import load_checkpoint
    from .nutrition import load_store

    model = load_checkpoint(checkpoint_path)
    store = load_store(store_path)
    if manifest_path is not None:
        class_names = DatasetManifest.load(manifest_path).class_names
    else:
        class_names = store.class_names()
    if len(class_names) != model.config.num_classes:
        raise ValueError(
            f"model expects {model.config.num_classes} classes but "
            f"{len(class_names)} class names were provided")
    app = create_app(model, class_names, store, config=config)
    uvicorn.run(app, host=host, port=port, log_level="info")
