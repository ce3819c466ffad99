"""Pydantic request/response models for the experiment service."""
from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class RunRequest(BaseModel):
    """Run an experiment from a config object (same keys as a config file)."""

    config: dict[str, Any] = Field(..., description="Experiment config (flat key-value object)")


class RunResponse(BaseModel):
    """Everything a client needs to persist locally."""

    rounds_csv: str
    aggregate_csv: str
    summary: dict[str, Any]
    bundle: dict[str, Any]


class CheckRequest(BaseModel):
    setting: str
    horizon: int = 1000
    trials: int = 2
    master_seed: int = 0
    algos: Optional[list[str]] = None


class CheckItemModel(BaseModel):
    name: str
    passed: bool
    detail: str


class CheckResponse(BaseModel):
    setting: str
    passed: bool
    checks: list[CheckItemModel]


class ExportRequest(BaseModel):
    """Re-export a previously downloaded results bundle."""

    bundle: dict[str, Any]
    format: str = Field(..., pattern="^(csv|json)$")


class ExportResponse(BaseModel):
    files: dict[str, str]  # filename -> file content


class SettingInfo(BaseModel):
    name: str
    d: int
    n: int
    description: str


class SettingsResponse(BaseModel):
    settings: list[SettingInfo]
    algorithms: list[str]


class HealthResponse(BaseModel):
    status: str
    version: str
