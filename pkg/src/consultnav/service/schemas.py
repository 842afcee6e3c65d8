"""Request/response models for the session API. Unknown request fields are rejected."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class CreateSessionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["interactive"] = "interactive"


class SessionCreated(BaseModel):
    session_id: str
    question: str
    turn: int
    status: str


class CandidateOut(BaseModel):
    text: str
    source: str


class AnswerRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    answer: str = Field(min_length=1)


class AnswerResponse(BaseModel):
    question: str | None = None
    candidates: list[CandidateOut] | None = None
    turn: int
    status: str
    conclusion: str | None = None


class HealthResponse(BaseModel):
    status: str
    vocab_size: int


class ErrorBody(BaseModel):
    error: str
    detail: str
