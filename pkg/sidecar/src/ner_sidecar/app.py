"""HTTP service exposing the NER model.

Wire contract (shared with the pipeline's NER client):

* ``GET /health`` -> 200 ``{"model": ..., "status": "ready"}`` once the
  model is loaded, 503 before that.
* ``POST /ner`` with ``{"doc_id": str, "text": str}`` ->
  ``{"entities": [{"start": int, "end": int, "label": str}]}``;
  400 on empty text, 503 while loading.

Responses depend only on the request text; concurrent callers receive
independent, correct answers.
"""
from __future__ import annotations

import logging
import os
import threading
from contextlib import asynccontextmanager
from typing import Callable

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .models import NerModel, load_model

log = logging.getLogger(__name__)

DEFAULT_MODEL = "en_ner_bc5cdr_md"


class NerRequest(BaseModel):
    doc_id: str
    text: str


class EntityPayload(BaseModel):
    start: int
    end: int
    label: str


class NerResponse(BaseModel):
    entities: list[EntityPayload]


class ModelState:
    """Tracks the asynchronously loaded model; thread-safe."""

    def __init__(self, loader: Callable[[], NerModel]) -> None:
        self._loader = loader
        self._lock = threading.Lock()
        self.model: NerModel | None = None
        self.error: str | None = None

    def load(self) -> None:
        try:
            model = self._loader()
        except Exception as exc:
            log.exception("model load failed")
            with self._lock:
                self.error = f"{type(exc).__name__}: {exc}"
            return
        with self._lock:
            self.model = model

    def load_in_background(self) -> None:
        threading.Thread(target=self.load, daemon=True).start()


def create_app(
    model_spec: str | None = None,
    loader: Callable[[], NerModel] | None = None,
    load_on_startup: bool = True,
) -> FastAPI:
    """Build the service; ``loader`` overrides model resolution (tests)."""
    spec = model_spec or os.environ.get("NER_MODEL", DEFAULT_MODEL)
    state = ModelState(loader or (lambda: load_model(spec)))

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if load_on_startup:
            state.load_in_background()
        yield

    app = FastAPI(title="ner-sidecar", lifespan=lifespan)
    app.state.model_state = state

    def _model_or_503() -> NerModel:
        if state.model is None:
            detail = state.error or "model is loading"
            raise HTTPException(status_code=503, detail=detail)
        return state.model

    @app.get("/health")
    def health() -> dict:
        model = _model_or_503()
        return {"model": model.name, "status": "ready"}

    @app.post("/ner", response_model=NerResponse)
    def ner(request: NerRequest) -> NerResponse:
        model = _model_or_503()
        if not request.text:
            raise HTTPException(status_code=400, detail="text must be non-empty")
        entities = model.entities(request.text)
        return NerResponse(
            entities=[EntityPayload(start=e.start, end=e.end, label=e.label) for e in entities]
        )

    return app
