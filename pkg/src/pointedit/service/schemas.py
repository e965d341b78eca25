"""Pydantic request/response models for the editing service."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field


class CloudWire(BaseModel):
    """Point cloud wire form: base64 of row-major f32le N x 6, colors in [0, 1]."""

    n: int = Field(ge=1)
    data: str
    color_range: Literal["01"] = "01"


class CreateSessionRequest(BaseModel):
    """An uploaded cloud (wire form or base64 PC6 file) or a shape-program preview."""

    cloud: Optional[CloudWire] = None
    pc6: Optional[str] = None  # base64 of a whole PC6 file
    category: Optional[str] = None
    params: dict[str, Union[bool, int, float]] = Field(default_factory=dict)
    seed: int = 0


class CreateSessionResponse(BaseModel):
    id: str
    cloud: CloudWire


class EditRequest(BaseModel):
    instruction: str
    sampler: Literal["ddim", "ddpm"] = "ddim"
    steps: int = Field(default=64, ge=1)
    seed: Optional[int] = None  # None lets the server draw one (it is returned)
    guidance: float = Field(default=1.0, ge=0.0)


class EditResponse(BaseModel):
    history_index: int
    seed: int
    cloud: CloudWire


class HistoryEntryModel(BaseModel):
    index: int
    instruction: str
    sampler: str
    steps: int
    seed: int
    guidance: float
    cloud: CloudWire


class HistoryResponse(BaseModel):
    id: str
    current: int
    initial: CloudWire
    entries: list[HistoryEntryModel]


class UndoResponse(BaseModel):
    current: int


class ParamSpecModel(BaseModel):
    name: str
    property: str
    kind: Literal["continuous", "integer", "boolean"]
    lo: float
    hi: float
    default: Union[bool, int, float]
    inc_instruction: str
    dec_instruction: str
    requires: dict[str, bool] = Field(default_factory=dict)


class ParamRegistryResponse(BaseModel):
    category: str
    params: list[ParamSpecModel]


class HealthResponse(BaseModel):
    status: str
    model_points: int
    d_model: int
    timesteps: int
