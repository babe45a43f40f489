"""FastAPI application implementing the three wire protocols.

POST /embed                {"texts": [...]} -> {"vectors": [[...]], "dim": D}
GET  /mlm/info             -> {"model": ..., "max_tokens": N}
POST /mlm/score            {"text": ...} -> {"tokens": [...], "logprobs": [...]}
POST /v1/chat/completions  reverse proxy to the configured upstream (optional)

Schema violations return 400, over-batch 413, and 503 while models load.
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager
from typing import Callable, Optional

import requests as _requests
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .backends import EmbedderBackend, MlmBackend
from .config import ServerConfig


class EmbedRequest(BaseModel):
    texts: list[str]


class ScoreRequest(BaseModel):
    text: str


class _ModelHolder:
    """Holds backends once loaded; endpoints answer 503 until then."""

    def __init__(self):
        self.embedder: Optional[EmbedderBackend] = None
        self.mlm: Optional[MlmBackend] = None
        self.error: Optional[str] = None
        self._lock = threading.Lock()

    def set(self, embedder: EmbedderBackend, mlm: MlmBackend) -> None:
        with self._lock:
            self.embedder, self.mlm = embedder, mlm

    def fail(self, message: str) -> None:
        with self._lock:
            self.error = message

    @property
    def ready(self) -> bool:
        return self.embedder is not None and self.mlm is not None


def _default_loader(config: ServerConfig) -> tuple[EmbedderBackend, MlmBackend]:
    from .backends import MaskedLmBackend, SentenceEmbedderBackend

    return (
        SentenceEmbedderBackend(config.embedder_model),
        MaskedLmBackend(config.mlm_model, max_tokens_cap=config.max_tokens),
    )


def create_app(
    config: ServerConfig,
    embedder: Optional[EmbedderBackend] = None,
    mlm: Optional[MlmBackend] = None,
    loader: Optional[Callable[[ServerConfig], tuple]] = None,
) -> FastAPI:
    """Build the service. Injected backends make the app ready immediately;
    otherwise the loader runs in a background thread at startup."""
    holder = _ModelHolder()
    if embedder is not None and mlm is not None:
        holder.set(embedder, mlm)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if not holder.ready:
            def work():
                try:
                    backends = (loader or _default_loader)(config)
                    holder.set(*backends)
                except Exception as e:  # surfaced via 503 detail
                    holder.fail(f"{type(e).__name__}: {e}")

            threading.Thread(target=work, daemon=True).start()
        yield

    app = FastAPI(title="model-server", docs_url=None, redoc_url=None,
                  lifespan=lifespan)
    app.state.models = holder

    @app.exception_handler(RequestValidationError)
    async def _schema_violation(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "schema violation"})

    def _unready() -> JSONResponse:
        detail = {"error": "models loading"}
        if holder.error:
            detail = {"error": f"model load failed: {holder.error}"}
        return JSONResponse(status_code=503, content=detail)

    @app.post("/embed")
    def embed(body: EmbedRequest):
        if not holder.ready:
            return _unready()
        if not body.texts or any(not t.strip() for t in body.texts):
            return JSONResponse(status_code=400, content={"error": "empty text"})
        if len(body.texts) > config.max_batch:
            return JSONResponse(
                status_code=413,
                content={"error": f"batch exceeds max of {config.max_batch}"},
            )
        vectors = holder.embedder.encode(body.texts)
        return {"vectors": vectors, "dim": holder.embedder.dim}

    @app.get("/mlm/info")
    def mlm_info():
        if not holder.ready:
            return _unready()
        return {"model": holder.mlm.model_name, "max_tokens": holder.mlm.max_tokens}

    @app.post("/mlm/score")
    def mlm_score(body: ScoreRequest):
        if not holder.ready:
            return _unready()
        if not body.text.strip():
            return JSONResponse(status_code=400, content={"error": "empty text"})
        tokens, logprobs = holder.mlm.score(body.text)
        if not tokens:
            return JSONResponse(status_code=400, content={"error": "no scorable tokens"})
        return {"tokens": tokens, "logprobs": logprobs}

    @app.post("/v1/chat/completions")
    async def chat_proxy(request: Request):
        if config.chat_upstream is None:
            return JSONResponse(
                status_code=404, content={"error": "no chat upstream configured"},
            )
        body = await request.body()
        headers = {"Content-Type": "application/json"}
        if config.chat_token:
            headers["Authorization"] = f"Bearer {config.chat_token}"
        try:
            upstream = _requests.post(
                f"{config.chat_upstream.rstrip('/')}/v1/chat/completions",
                data=body, headers=headers, timeout=120,
            )
        except _requests.RequestException as e:
            return JSONResponse(
                status_code=502, content={"error": f"upstream unreachable: {e}"},
            )
        return JSONResponse(status_code=upstream.status_code, content=upstream.json())

    return app
