"""Declarative scene descriptions and their geometric realizations.

Scenes are strict JSON documents (unknown keys are rejected) describing
the box domain, grid resolution, timestep, materials, and the fluid and
solid shapes. The same pydantic models serve as the HTTP request schema of
the service layer.
"""

from __future__ import annotations

import json
from importlib import resources
from typing import Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .apic import ParticleSet
from .errors import SceneError
from .grid import GridDims, SolidSdf2


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DiscShape(_StrictModel):
    type: Literal["disc"]
    center: tuple[float, float]
    radius: float = Field(gt=0)

    def sdf(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.hypot(x - self.center[0], y - self.center[1]) - self.radius

    def bounds(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r, cx + r, cy + r)


class BoxShape(_StrictModel):
    type: Literal["box"]
    min: tuple[float, float]
    max: tuple[float, float]

    @model_validator(mode="after")
    def _ordered(self):
        if not (self.min[0] < self.max[0] and self.min[1] < self.max[1]):
            raise ValueError("box min must be strictly below max")
        return self

    def sdf(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        cx = 0.5 * (self.min[0] + self.max[0])
        cy = 0.5 * (self.min[1] + self.max[1])
        hx = 0.5 * (self.max[0] - self.min[0])
        hy = 0.5 * (self.max[1] - self.min[1])
        qx = np.abs(x - cx) - hx
        qy = np.abs(y - cy) - hy
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        inside = np.minimum(np.maximum(qx, qy), 0.0)
        return outside + inside

    def bounds(self):
        return (*self.min, *self.max)


Shape = Union[DiscShape, BoxShape]


class FluidRegion(_StrictModel):
    shape: Shape = Field(discriminator="type")
    color: int = 0


class MuRegion(_StrictModel):
    shape: Shape = Field(discriminator="type")
    mu: float = Field(ge=0)


class Scene(_StrictModel):
    """Full scene description; all quantities in SI units."""

    name: str = "scene"
    domain: tuple[float, float]
    grid: tuple[int, int]
    dt: float = Field(gt=0)
    gravity: tuple[float, float] = (0.0, -9.8)
    rho: float = Field(default=1000.0, gt=0)
    mu: Union[float, list[MuRegion]] = 1.0
    mu_background: float = Field(default=0.0, ge=0)
    fluids: list[FluidRegion] = Field(default_factory=list)
    solids: list[Shape] = Field(default_factory=list)
    seed: int = 0
    jitter: float = Field(default=1.0, ge=0, le=1)

    @model_validator(mode="after")
    def _consistent(self):
        w, h = self.domain
        nx, ny = self.grid
        if w <= 0 or h <= 0:
            raise ValueError("domain must be positive")
        if nx < 2 or ny < 2:
            raise ValueError("grid needs at least 2x2 cells")
        if abs(w / nx - h / ny) > 1e-12 * max(w, h):
            raise ValueError("cells must be square: domain and grid aspect disagree")
        if isinstance(self.mu, float) and self.mu < 0:
            raise ValueError("mu must be non-negative")
        tol = 1e-9 * max(w, h)
        for region in self.fluids:
            x0, y0, x1, y1 = region.shape.bounds()
            if x0 < -tol or y0 < -tol or x1 > w + tol or y1 > h + tol:
                raise ValueError(f"fluid shape {region.shape} leaves the domain")
        for shape in self.solids:
            x0, y0, x1, y1 = shape.bounds()
            if x0 < -tol or y0 < -tol or x1 > w + tol or y1 > h + tol:
                raise ValueError(f"solid shape {shape} leaves the domain")
        return self

    def dims(self) -> GridDims:
        return GridDims(self.grid[0], self.grid[1], self.domain[0] / self.grid[0])

    def solid_sdf(self, dims: GridDims) -> SolidSdf2:
        """Solid distance on the half-spacing grid (walls are not solids)."""
        return SolidSdf2(solid_sdf_at(self.solids, *_sym_coords(dims), dims))

    def mu_field(self, dims: GridDims):
        """Scalar viscosity, or the per-cell field for region lists."""
        if isinstance(self.mu, float):
            return self.mu
        xs = (np.arange(dims.nx) + 0.5) * dims.dx
        ys = (np.arange(dims.ny) + 0.5) * dims.dx
        x, y = np.meshgrid(xs, ys, indexing="ij")
        field = np.full(dims.cell_shape, self.mu_background)
        for region in self.mu:
            inside = region.shape.sdf(x, y) < 0.0
            field[inside] = region.mu
        return field

    def has_variable_mu(self) -> bool:
        return not isinstance(self.mu, float)


def _sym_coords(dims: GridDims):
    hs = 0.5 * dims.dx
    xs = np.arange(2 * dims.nx + 1) * hs
    ys = np.arange(2 * dims.ny + 1) * hs
    return np.meshgrid(xs, ys, indexing="ij")


def solid_sdf_at(shapes, x: np.ndarray, y: np.ndarray, dims: GridDims) -> np.ndarray:
    """Signed distance to the union of solid shapes at given positions."""
    far = float(np.hypot(dims.width, dims.height))
    d = np.full(np.shape(x), far)
    for shape in shapes:
        d = np.minimum(d, shape.sdf(x, y))
    return d


def pointer_solid(
    pos: tuple[float, float], radius: float, dims: GridDims, extra_shapes=()
) -> SolidSdf2:
    """Solid field for a circular pointer, merged with any static solids."""
    if radius <= 0:
        raise ValueError("pointer radius must be positive")
    x, y = _sym_coords(dims)
    d = np.hypot(x - pos[0], y - pos[1]) - radius
    if extra_shapes:
        d = np.minimum(d, solid_sdf_at(extra_shapes, x, y, dims))
    return SolidSdf2(d)


def seed_particles(scene: Scene, dims: GridDims | None = None) -> ParticleSet:
    """Four particles per covered cell on a jittered 2x2 subcell lattice.

    A subcell seeds a particle when its center is inside a fluid shape and
    outside every solid. Colors come from the first containing region.
    Jitter is uniform within the subcell, scaled by ``scene.jitter``
    (0 gives the exact lattice), drawn from ``scene.seed``.
    """
    dims = dims or scene.dims()
    h = dims.dx
    sub_x = (np.arange(2 * dims.nx) + 0.5) * (h / 2)
    sub_y = (np.arange(2 * dims.ny) + 0.5) * (h / 2)
    sx, sy = np.meshgrid(sub_x, sub_y, indexing="ij")
    xs = sx.ravel()
    ys = sy.ravel()
    color = np.full(xs.shape, -1, dtype=np.int32)
    for region in scene.fluids:
        inside = region.shape.sdf(xs, ys) < 0.0
        color[inside & (color < 0)] = region.color
    keep = color >= 0
    if scene.solids:
        keep &= solid_sdf_at(scene.solids, xs, ys, dims) > 0.0
    xs, ys, color = xs[keep], ys[keep], color[keep]

    rng = np.random.default_rng(scene.seed)
    if scene.jitter > 0 and xs.size:
        amp = 0.25 * h * scene.jitter
        jit = rng.uniform(-amp, amp, size=(xs.size, 2))
        xs = xs + jit[:, 0]
        ys = ys + jit[:, 1]

    positions = np.column_stack([xs, ys])
    mass = scene.rho * h * h / 4.0
    return ParticleSet(
        positions=positions,
        velocities=np.zeros_like(positions),
        affine=np.zeros((positions.shape[0], 2, 2)),
        color=color,
        mass=mass,
    )


def load_scene(source) -> Scene:
    """Parse a scene from a JSON file path or a parsed dict."""
    if isinstance(source, dict):
        payload = source
    else:
        try:
            with open(source, "r", encoding="utf-8") as f:
                payload = json.load(f)
        except FileNotFoundError:
            builtin = builtin_scene_names()
            name = str(source)
            if name in builtin:
                return load_builtin_scene(name)
            raise SceneError(f"scene file {source!r} not found") from None
        except json.JSONDecodeError as exc:
            raise SceneError(f"scene file {source!r} is not valid JSON: {exc}") from exc
    try:
        return Scene.model_validate(payload)
    except ValidationError as exc:
        raise SceneError(f"invalid scene: {exc}") from exc


def builtin_scene_names() -> list[str]:
    files = resources.files("viscid").joinpath("scenes")
    return sorted(p.name.removesuffix(".json") for p in files.iterdir() if p.name.endswith(".json"))


def load_builtin_scene(name: str) -> Scene:
    path = resources.files("viscid").joinpath("scenes").joinpath(f"{name}.json")
    if not path.is_file():
        raise SceneError(f"unknown builtin scene {name!r}; available: {builtin_scene_names()}")
    return load_scene(json.loads(path.read_text(encoding="utf-8")))
