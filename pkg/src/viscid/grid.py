"""Staggered-grid fields, level sets, and occupancy fractions.

Layout conventions used across the package (index order ``[i, j]`` with
``i`` along x and ``j`` along y, square cells of width ``dx``):

* x-velocity ``u`` lives on vertical cell faces, shape ``(nx+1, ny)``,
  sample ``u[i, j]`` at position ``(i*dx, (j+0.5)*dx)``.
* y-velocity ``v`` lives on horizontal cell faces, shape ``(nx, ny+1)``,
  sample ``v[i, j]`` at ``((i+0.5)*dx, j*dx)``.
* the fluid level set ``phi`` lives on cell corners, shape
  ``(nx+1, ny+1)``, negative inside the fluid.
* solid signed distance ``D`` is sampled on the dense half-spacing grid of
  shape ``(2*nx+1, 2*ny+1)`` that co-registers centers, faces and corners,
  non-positive inside the solid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class GridDims:
    """Cell counts and cell width of a square-celled staggered grid."""

    nx: int
    ny: int
    dx: float

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid needs at least 2x2 cells, got {self.nx}x{self.ny}")
        if not self.dx > 0:
            raise ValueError(f"cell width must be positive, got {self.dx}")

    @property
    def width(self) -> float:
        return self.nx * self.dx

    @property
    def height(self) -> float:
        return self.ny * self.dx

    @property
    def u_shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny)

    @property
    def v_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny + 1)

    @property
    def cell_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def node_shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny + 1)

    @property
    def sym_shape(self) -> tuple[int, int]:
        """Shape of the dense half-spacing grid covering all sample families."""
        return (2 * self.nx + 1, 2 * self.ny + 1)


@dataclass
class MacVelocity2:
    """Staggered velocity field; ``u`` on x-faces, ``v`` on y-faces."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        nx = self.u.shape[0] - 1
        ny = self.u.shape[1]
        if self.v.shape != (nx, ny + 1):
            raise ValueError(
                f"inconsistent staggered shapes: u {self.u.shape}, v {self.v.shape}"
            )

    @classmethod
    def zeros(cls, dims: GridDims) -> "MacVelocity2":
        return cls(np.zeros(dims.u_shape), np.zeros(dims.v_shape))

    def copy(self) -> "MacVelocity2":
        return MacVelocity2(self.u.copy(), self.v.copy())

    def __add__(self, other: "MacVelocity2") -> "MacVelocity2":
        return MacVelocity2(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "MacVelocity2") -> "MacVelocity2":
        return MacVelocity2(self.u - other.u, self.v - other.v)


@dataclass
class LevelSet2:
    """Signed distance to the fluid surface at cell corners, negative inside."""

    phi: np.ndarray


@dataclass
class SolidSdf2:
    """Signed distance to solids on the half-spacing grid, ``D <= 0`` inside."""

    D: np.ndarray


@dataclass
class VolumeFractions2:
    """Fluid occupancy in [0, 1] for each staggered sample family."""

    cell: np.ndarray
    u_face: np.ndarray
    v_face: np.ndarray
    node: np.ndarray


@dataclass
class Gradients2:
    """Velocity derivatives on their natural co-located families.

    Normal derivatives sit at cell centers, cross derivatives at corners.
    """

    du_dx: np.ndarray  # (nx, ny)
    dv_dy: np.ndarray  # (nx, ny)
    du_dy: np.ndarray  # (nx+1, ny+1)
    dv_dx: np.ndarray  # (nx+1, ny+1)


def edge_occupancy(d_plus: float, d_minus: float) -> float:
    """Wetted fraction of an edge from the signed distances at its endpoints.

    Both non-positive gives 1, both positive gives 0; a sign change
    interpolates the zero crossing. Argument order does not matter.
    """
    return float(_edge_occupancy_arrays(np.asarray(d_plus, dtype=float),
                                        np.asarray(d_minus, dtype=float)))


def _edge_occupancy_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    both_wet = hi <= 0.0
    both_dry = lo > 0.0
    cross = ~(both_wet | both_dry)
    denom = np.where(cross, hi - lo, 1.0)
    frac = np.clip(-lo / denom, 0.0, 1.0)
    return np.where(both_wet, 1.0, np.where(both_dry, 0.0, frac))


def occupancy_fractions(field_sym: np.ndarray) -> np.ndarray:
    """Occupancy of the dual cell around every half-spacing grid position.

    ``field_sym`` is a signed field on the ``(2nx+1, 2ny+1)`` grid (negative
    inside). Each position's dual cell is the square of one full cell width
    centered on it; its occupancy is the mean of its four edge occupancies.
    Corner samples falling outside the grid are replicated from the border.
    """
    fp = np.pad(field_sym, 1, mode="edge")
    bl = fp[:-2, :-2]
    br = fp[2:, :-2]
    tl = fp[:-2, 2:]
    tr = fp[2:, 2:]
    # grouped so transposing or mirroring the field permutes only the
    # operands of commutative additions: fractions transpose bitwise
    x_edges = _edge_occupancy_arrays(bl, br) + _edge_occupancy_arrays(tl, tr)
    y_edges = _edge_occupancy_arrays(bl, tl) + _edge_occupancy_arrays(br, tr)
    return (x_edges + y_edges) * 0.25


def corner_field_to_sym(phi: np.ndarray) -> np.ndarray:
    """Bilinearly refine a corner field onto the half-spacing grid."""
    nxp, nyp = phi.shape
    out = np.empty((2 * nxp - 1, 2 * nyp - 1), dtype=phi.dtype)
    out[::2, ::2] = phi
    out[1::2, ::2] = 0.5 * (phi[:-1, :] + phi[1:, :])
    out[::2, 1::2] = 0.5 * (phi[:, :-1] + phi[:, 1:])
    # diagonal grouping keeps the average bitwise transpose/mirror invariant
    out[1::2, 1::2] = 0.25 * (
        (phi[:-1, :-1] + phi[1:, 1:]) + (phi[1:, :-1] + phi[:-1, 1:])
    )
    return out


def fluid_volumes(phi: LevelSet2, dims: GridDims) -> VolumeFractions2:
    """Fluid occupancy for cells, faces and nodes from the corner level set.

    A cell's occupancy is the mean occupancy of its four edges, evaluated
    from the corner signed distances. Faces and nodes use the same rule on
    the dual cell centered at the sample, with the level set refined
    bilinearly onto the half-spacing grid.
    """
    if phi.phi.shape != dims.node_shape:
        raise ValueError(f"level set shape {phi.phi.shape} != {dims.node_shape}")
    occ = occupancy_fractions(corner_field_to_sym(phi.phi))
    return VolumeFractions2(
        cell=occ[1::2, 1::2],
        u_face=occ[0::2, 1::2],
        v_face=occ[1::2, 0::2],
        node=occ[0::2, 0::2],
    )


def solid_indicator(solid: SolidSdf2) -> np.ndarray:
    """Binary solid mask on the half-spacing grid: 1 where ``D <= 0``."""
    return (solid.D <= 0.0).astype(np.float64)


def velocity_gradients(vel: MacVelocity2, dims: GridDims) -> Gradients2:
    """Finite-difference velocity derivatives on the staggered grid.

    Normal derivatives are centered differences of the two faces bounding
    each cell. Cross derivatives at interior corners are centered
    differences of the two adjacent parallel faces; boundary corners reuse
    the nearest interior difference (first-order one-sided).
    """
    if vel.u.shape != dims.u_shape or vel.v.shape != dims.v_shape:
        raise ValueError("velocity shapes do not match grid dims")
    inv_dx = 1.0 / dims.dx
    du_dx = np.diff(vel.u, axis=0) * inv_dx
    dv_dy = np.diff(vel.v, axis=1) * inv_dx

    du_dy = np.empty(dims.node_shape)
    core_u = np.diff(vel.u, axis=1) * inv_dx  # nodes j = 1 .. ny-1
    du_dy[:, 1:-1] = core_u
    du_dy[:, 0] = core_u[:, 0]
    du_dy[:, -1] = core_u[:, -1]

    dv_dx = np.empty(dims.node_shape)
    core_v = np.diff(vel.v, axis=0) * inv_dx  # nodes i = 1 .. nx-1
    dv_dx[1:-1, :] = core_v
    dv_dx[0, :] = core_v[0, :]
    dv_dx[-1, :] = core_v[-1, :]

    return Gradients2(du_dx=du_dx, dv_dy=dv_dy, du_dy=du_dy, dv_dx=dv_dx)


def level_set_from_particles(
    positions: np.ndarray, dims: GridDims, radius: float
) -> LevelSet2:
    """Corner-sampled signed distance to the union of particle spheres.

    ``phi(x) = min_p |x - x_p| - radius``, clamped to the domain diagonal.
    No redistancing is applied.
    """
    diag = float(np.hypot(dims.width, dims.height))
    xs = np.arange(dims.nx + 1) * dims.dx
    ys = np.arange(dims.ny + 1) * dims.dx
    if len(positions) == 0:
        return LevelSet2(np.full(dims.node_shape, diag))
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    corners = np.column_stack([gx.ravel(), gy.ravel()])
    dist, _ = cKDTree(positions).query(corners, k=1)
    phi = (dist - radius).reshape(dims.node_shape)
    return LevelSet2(np.clip(phi, -diag, diag))
