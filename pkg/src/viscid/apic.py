"""Particle storage and affine particle-in-cell grid transfers.

Transfers use the quadratic B-spline kernel (3x3 stencil per face family)
with the constant inertia tensor ``D = (dx^2/4) I``, so the per-particle
affine matrix is gathered as ``C = (4/dx^2) sum w (value - ref) d^T``.

Both transfer directions subtract a reference value before accumulating
and add it back afterwards. This is algebraically a no-op but makes the
transfers reproduce a bitwise-uniform field bitwise exactly, which the
rigid-motion neutrality guarantees elsewhere in the package rely on.
Scatter uses ``np.add.at`` so the reduction order is fixed and results are
reproducible run to run.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import GridDims, MacVelocity2, SolidSdf2


@dataclass
class ParticleSet:
    """Particle state arrays; ``mass`` is the uniform per-particle mass."""

    positions: np.ndarray  # (P, 2) meters
    velocities: np.ndarray  # (P, 2) m/s
    affine: np.ndarray  # (P, 2, 2) 1/s
    color: np.ndarray  # (P,) int32 tag
    mass: float

    def __post_init__(self):
        p = self.positions.shape[0]
        if self.positions.shape != (p, 2) or self.velocities.shape != (p, 2):
            raise ValueError("positions and velocities must be (P, 2)")
        if self.affine.shape != (p, 2, 2):
            raise ValueError("affine must be (P, 2, 2)")
        if self.color.shape != (p,):
            raise ValueError("color must be (P,)")

    def __len__(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def empty(cls) -> "ParticleSet":
        return cls(
            positions=np.zeros((0, 2)),
            velocities=np.zeros((0, 2)),
            affine=np.zeros((0, 2, 2)),
            color=np.zeros(0, dtype=np.int32),
            mass=1.0,
        )


def _quadratic_bspline(r: np.ndarray) -> np.ndarray:
    a = np.abs(r)
    return np.where(a < 0.5, 0.75 - a**2, np.where(a < 1.5, 0.5 * (1.5 - a) ** 2, 0.0))


def _stencil(coord: np.ndarray, dx: float, offset: float, count: int):
    """3-point stencil indices, weights and face offsets along one axis.

    ``coord`` are particle coordinates, ``offset`` the family's staggering
    (0 or 0.5 cells), ``count`` the number of samples along the axis.
    Out-of-range stencil entries get zero weight and a clamped index.
    """
    t = coord / dx - offset
    base = np.floor(t + 0.5).astype(np.int64) - 1
    idx = base[:, None] + np.arange(3)[None, :]
    w = _quadratic_bspline(t[:, None] - idx)
    valid = (idx >= 0) & (idx < count)
    w = np.where(valid, w, 0.0)
    d = (idx + offset) * dx - coord[:, None]  # face position minus particle
    return np.clip(idx, 0, count - 1), w, d

_FAMILY_OFFSETS = {"u": (0.0, 0.5), "v": (0.5, 0.0)}


def _family_shape(dims: GridDims, family: str) -> tuple[int, int]:
    return dims.u_shape if family == "u" else dims.v_shape


def p2g(
    particles: ParticleSet, dims: GridDims
) -> tuple[MacVelocity2, tuple[np.ndarray, np.ndarray]]:
    """Scatter particle momentum to the face grids.

    Returns the face velocities and the per-family accumulated masses;
    faces with zero mass carry no velocity information (value 0, invalid).
    """
    vel = MacVelocity2.zeros(dims)
    masses = {}
    if len(particles) == 0:
        return vel, (np.zeros(dims.u_shape), np.zeros(dims.v_shape))

    pos = particles.positions
    ref = particles.velocities[0]
    for axis, family in enumerate(("u", "v")):
        off_x, off_y = _FAMILY_OFFSETS[family]
        shape = _family_shape(dims, family)
        ix, wx, dx_off = _stencil(pos[:, 0], dims.dx, off_x, shape[0])
        iy, wy, dy_off = _stencil(pos[:, 1], dims.dx, off_y, shape[1])
        w = wx[:, :, None] * wy[:, None, :]
        # value carried to each face: relative velocity plus affine term
        rel = particles.velocities[:, axis] - ref[axis]
        val = (
            rel[:, None, None]
            + particles.affine[:, axis, 0][:, None, None] * dx_off[:, :, None]
            + particles.affine[:, axis, 1][:, None, None] * dy_off[:, None, :]
        )
        flat = (ix[:, :, None] * shape[1] + iy[:, None, :]).ravel()
        mass = np.zeros(shape[0] * shape[1])
        mom = np.zeros(shape[0] * shape[1])
        np.add.at(mass, flat, (particles.mass * w).ravel())
        np.add.at(mom, flat, (particles.mass * w * val).ravel())
        covered = mass > 0.0
        field = np.zeros(shape[0] * shape[1])
        field[covered] = ref[axis] + mom[covered] / mass[covered]
        if family == "u":
            vel.u = field.reshape(shape)
        else:
            vel.v = field.reshape(shape)
        masses[family] = mass.reshape(shape)
    return vel, (masses["u"], masses["v"])


def g2p(grid: MacVelocity2, particles: ParticleSet, dims: GridDims) -> ParticleSet:
    """Gather face velocities and their local affine fit onto particles.

    The reference subtracted per particle is the grid value at its stencil
    center, so a bitwise-uniform grid maps to exactly that constant with a
    zero affine matrix.
    """
    if len(particles) == 0:
        return particles
    pos = particles.positions
    velocities = np.empty_like(particles.velocities)
    affine = np.empty_like(particles.affine)
    inv_d = 4.0 / dims.dx**2
    for axis, (family, field) in enumerate((("u", grid.u), ("v", grid.v))):
        off_x, off_y = _FAMILY_OFFSETS[family]
        shape = _family_shape(dims, family)
        ix, wx, dx_off = _stencil(pos[:, 0], dims.dx, off_x, shape[0])
        iy, wy, dy_off = _stencil(pos[:, 1], dims.dx, off_y, shape[1])
        w = wx[:, :, None] * wy[:, None, :]
        vals = field[ix[:, :, None], iy[:, None, :]]
        ref = field[ix[:, 1], iy[:, 1]]
        rel = vals - ref[:, None, None]
        velocities[:, axis] = ref + np.sum(w * rel, axis=(1, 2))
        affine[:, axis, 0] = inv_d * np.sum(w * rel * dx_off[:, :, None], axis=(1, 2))
        affine[:, axis, 1] = inv_d * np.sum(w * rel * dy_off[:, None, :], axis=(1, 2))
    return replace(particles, velocities=velocities, affine=affine)


def sample_solid_sdf(solid: SolidSdf2, pts: np.ndarray, dims: GridDims) -> np.ndarray:
    """Bilinear solid-distance samples at arbitrary points."""
    hs = dims.dx * 0.5
    nx2, ny2 = solid.D.shape
    tx = np.clip(pts[:, 0] / hs, 0.0, nx2 - 1.0)
    ty = np.clip(pts[:, 1] / hs, 0.0, ny2 - 1.0)
    i0 = np.clip(np.floor(tx).astype(np.int64), 0, nx2 - 2)
    j0 = np.clip(np.floor(ty).astype(np.int64), 0, ny2 - 2)
    fx = tx - i0
    fy = ty - j0
    d00 = solid.D[i0, j0]
    d10 = solid.D[i0 + 1, j0]
    d01 = solid.D[i0, j0 + 1]
    d11 = solid.D[i0 + 1, j0 + 1]
    return (
        d00 * (1 - fx) * (1 - fy)
        + d10 * fx * (1 - fy)
        + d01 * (1 - fx) * fy
        + d11 * fx * fy
    )


def _sdf_gradient(solid: SolidSdf2, pts: np.ndarray, dims: GridDims) -> np.ndarray:
    eps = 0.25 * dims.dx
    grad = np.empty_like(pts)
    for axis in range(2):
        step = np.zeros((1, 2))
        step[0, axis] = eps
        grad[:, axis] = (
            sample_solid_sdf(solid, pts + step, dims) - sample_solid_sdf(solid, pts - step, dims)
        ) / (2 * eps)
    norm = np.linalg.norm(grad, axis=1, keepdims=True)
    return grad / np.maximum(norm, 1e-12)


def advect(
    particles: ParticleSet,
    dt: float,
    dims: GridDims,
    solid: SolidSdf2 | None = None,
) -> ParticleSet:
    """Forward-Euler advection with solid push-out and domain clamping.

    Particles ending inside a solid are projected out along the solid
    distance gradient and lose their wall-normal velocity; particles
    leaving the box are clamped with the crossed component zeroed.
    """
    if len(particles) == 0:
        return particles
    pos = particles.positions + dt * particles.velocities
    vel = particles.velocities.copy()

    if solid is not None:
        pushed = np.zeros(len(particles), dtype=bool)
        for _ in range(3):
            d = sample_solid_sdf(solid, pos, dims)
            inside = d < 0.0
            if not np.any(inside):
                break
            n = _sdf_gradient(solid, pos[inside], dims)
            pos[inside] -= n * d[inside, None]
            pushed |= inside
        if np.any(pushed):
            n = _sdf_gradient(solid, pos[pushed], dims)
            vn = np.sum(vel[pushed] * n, axis=1, keepdims=True)
            vel[pushed] -= vn * n

    margin = 1e-9 * dims.dx
    lo = np.array([margin, margin])
    hi = np.array([dims.width - margin, dims.height - margin])
    clamped_lo = pos < lo
    clamped_hi = pos > hi
    pos = np.clip(pos, lo, hi)
    vel[clamped_lo | clamped_hi] = 0.0
    return replace(particles, positions=pos, velocities=vel)


def _fill_from_neighbors(vals: np.ndarray, valid: np.ndarray) -> None:
    """One dilation sweep: copy the first valid neighbor (fixed -x,+x,-y,+y
    priority) into each invalid entry. Pure copies, no arithmetic."""
    shifts = ((-1, 0), (1, 0), (0, -1), (0, 1))
    need = ~valid
    chosen = np.zeros_like(valid)
    for si, sj in shifts:
        nb_val = np.roll(vals, (si, sj), axis=(0, 1))
        nb_ok = np.roll(valid, (si, sj), axis=(0, 1))
        if si == -1:
            nb_ok[-1, :] = False
        if si == 1:
            nb_ok[0, :] = False
        if sj == -1:
            nb_ok[:, -1] = False
        if sj == 1:
            nb_ok[:, 0] = False
        take = need & ~chosen & nb_ok
        vals[take] = nb_val[take]
        chosen |= take
    valid |= chosen


def extend_velocity(
    vel: MacVelocity2, mass_u: np.ndarray, mass_v: np.ndarray, sweeps: int = 3
) -> MacVelocity2:
    """Fill massless faces by dilating valid values outward a few rings.

    Gives boundary cells well-defined velocity differences and keeps
    advection sampling off hard zeros. Copy-only, so uniform fields stay
    bitwise uniform across the extension band.
    """
    out = vel.copy()
    for field, mass in ((out.u, mass_u), (out.v, mass_v)):
        valid = mass > 0.0
        if valid.all() or not valid.any():
            continue
        for _ in range(sweeps):
            _fill_from_neighbors(field, valid)
            if valid.all():
                break
    return out
