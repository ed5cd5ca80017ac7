"""Request/response schemas of the stepping service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..scene import Scene


class PointerState(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x: float
    y: float
    radius: float = Field(gt=0)
    vx: float = 0.0
    vy: float = 0.0


class CreateSessionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scene: Optional[Scene] = None
    scene_name: Optional[str] = None
    solver: Literal["classic", "neural"] = "classic"
    weights_name: Optional[str] = None


class SessionInfo(BaseModel):
    session_id: str
    scene_name: str
    solver: str
    frame: int
    time: float
    particle_count: int
    domain: tuple[float, float]
    grid: tuple[int, int]
    dt: float
    colors: list[int]


class StepRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pointer: Optional[PointerState] = None
    substeps: int = Field(default=1, ge=1, le=10)


class StepResponse(BaseModel):
    frame: int
    time: float
    positions: list[tuple[float, float]]
    kinetic_energy: float
    max_speed: float
    timings_ms: dict[str, float]
    total_ms: float
    solver: str


class SolverSwitchRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    solver: Literal["classic", "neural"]
    weights_name: Optional[str] = None


class WeightsInfo(BaseModel):
    name: str
    depth: int
    in_channels: int
    widths: list[int]
