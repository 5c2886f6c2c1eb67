"""FastAPI app speaking the reader wire protocol.

POST /read   {"question": str, "passages": [{"id": str, "text": str}]}
             -> {"candidates": [...]}, one candidate per passage, in order
GET /health  -> {"status": "ok"|"degraded", "model": str}
GET /config  -> the active ServiceConfig
"""

from __future__ import annotations

import logging

import uvicorn
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .model import ServiceConfig, SpanModel

logger = logging.getLogger(__name__)


class PassageIn(BaseModel):
    id: str
    text: str = Field(min_length=1)


class ReadRequest(BaseModel):
    question: str = Field(min_length=1)
    passages: list[PassageIn] = Field(min_length=1)


class CandidateOut(BaseModel):
    passage_id: str
    answer: str
    start_char: int
    end_char: int
    score: float


class ReadResponse(BaseModel):
    candidates: list[CandidateOut]


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="extractive QA reader service")
    try:
        model: SpanModel | None = SpanModel(config)
        load_error: str | None = None
    except Exception as exc:  # degraded service still answers /health
        logger.error("model load failed: %s", exc)
        model = None
        load_error = str(exc)

    @app.get("/health")
    def health() -> dict:
        if model is None:
            return {"status": "degraded", "model": config.model, "error": load_error}
        return {"status": "ok", "model": config.model}

    @app.get("/config")
    def config_echo() -> dict:
        return config.to_dict()

    @app.post("/read", response_model=ReadResponse)
    def read(request: ReadRequest) -> ReadResponse:
        if model is None:
            raise HTTPException(status_code=503, detail=f"model unavailable: {load_error}")
        spans = model.read_batch(request.question, [p.text for p in request.passages])
        candidates = []
        for passage, span in zip(request.passages, spans):
            candidates.append(
                CandidateOut(
                    passage_id=passage.id,
                    answer=passage.text[span.start_char : span.end_char],
                    start_char=span.start_char,
                    end_char=span.end_char,
                    score=span.score,
                )
            )
        return ReadResponse(candidates=candidates)

    return app


def serve(config: ServiceConfig, host: str = "0.0.0.0", port: int = 8000) -> None:
    """Run the service until interrupted."""
    uvicorn.run(create_app(config), host=host, port=port)
