"""Wire types for the HTTP service (request models live in fklab.config)."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from ..config import ModelSpec


class ValidateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: ModelSpec = Field(discriminator="kind")


class CommandResponse(BaseModel):
    command: str
    report: dict
    csv: Optional[str] = None
    plot_csv: Optional[str] = None
    violation: bool


class HealthResponse(BaseModel):
    status: str
    version: str
