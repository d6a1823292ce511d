"""Request/response models for the HTTP API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class JobCreateRequest(BaseModel):
    kind: str
    params: dict = Field(default_factory=dict)


class JobCreateResponse(BaseModel):
    job_id: str


class JobView(BaseModel):
    job_id: str
    kind: str
    state: str
    progress: float
    log_tail: list[str]
    result_path: str | None = None
    params: dict = Field(default_factory=dict)


class AnswerApiRequest(BaseModel):
    question: str = Field(min_length=1)
    n: int | None = Field(default=None, ge=1)


class ContextView(BaseModel):
    chunk_id: str
    text: str
    score: float
    rank: int


class AnswerApiResponse(BaseModel):
    answer: str
    contexts: list[ContextView]
