"""Incompressibility projection on the staggered grid.

Standard 5-point Poisson solve per fluid cell with free-surface pressure
pinned to zero on air cells and no-flux conditions at solids and the box
walls. Faces touching a solid cell or a wall are forced to the solid
velocity before the divergence is measured and keep it afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import GridDims, MacVelocity2
from .linsys import pcg
from .viscosity import FluidParams

FLUID = 0
AIR = 1
SOLID = 2


@dataclass
class CellLabels:
    """Per-cell phase labels: fluid, air, or solid."""

    labels: np.ndarray  # (nx, ny) int8

    def __post_init__(self):
        if not np.all(np.isin(self.labels, (FLUID, AIR, SOLID))):
            raise ValueError("labels must be FLUID, AIR or SOLID")


def _forced_face_masks(labels: np.ndarray, dims: GridDims):
    """Faces that carry the solid velocity: wall faces and solid-adjacent."""
    solid = labels == SOLID
    u_forced = np.zeros(dims.u_shape, dtype=bool)
    u_forced[0, :] = True
    u_forced[-1, :] = True
    u_forced[1:-1, :] = solid[:-1, :] | solid[1:, :]
    v_forced = np.zeros(dims.v_shape, dtype=bool)
    v_forced[:, 0] = True
    v_forced[:, -1] = True
    v_forced[:, 1:-1] = solid[:, :-1] | solid[:, 1:]
    return u_forced, v_forced


def divergence(vel: MacVelocity2, dims: GridDims) -> np.ndarray:
    """Per-cell discrete divergence (1/s)."""
    return (np.diff(vel.u, axis=0) + np.diff(vel.v, axis=1)) / dims.dx


def project(
    vel: MacVelocity2,
    labels: CellLabels,
    params: FluidParams,
    dims: GridDims,
    tol: float = 1e-8,
    max_iter: int | None = None,
    solid_vel: MacVelocity2 | None = None,
) -> MacVelocity2:
    """Remove the divergence of the velocity field on fluid cells.

    Air cells take zero pressure, solid-adjacent and wall faces keep the
    solid velocity, and a scene with no fluid cells passes through
    unchanged.
    """
    lab = labels.labels
    if lab.shape != dims.cell_shape:
        raise ValueError(f"labels shape {lab.shape} != {dims.cell_shape}")
    fluid = lab == FLUID
    n_fluid = int(fluid.sum())
    if n_fluid == 0:
        return vel.copy()

    out = vel.copy()
    u_forced, v_forced = _forced_face_masks(lab, dims)
    sv = MacVelocity2.zeros(dims) if solid_vel is None else solid_vel
    out.u[u_forced] = sv.u[u_forced]
    out.v[v_forced] = sv.v[v_forced]

    cell_id = np.full(dims.cell_shape, -1, dtype=np.int64)
    cell_id[fluid] = np.arange(n_fluid)

    # Laplacian rows over fluid cells; neighbors across a wall or a solid
    # cell drop out (no-flux), air neighbors keep the diagonal (p = 0).
    rows, cols, vals = [], [], []
    fi, fj = np.nonzero(fluid)
    diag = np.zeros(n_fluid)
    for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        ni, nj = fi + di, fj + dj
        open_face = (ni >= 0) & (ni < dims.nx) & (nj >= 0) & (nj < dims.ny)
        not_solid = open_face.copy()
        not_solid[open_face] = lab[ni[open_face], nj[open_face]] != SOLID
        diag += not_solid.astype(float)
        is_fluid = not_solid.copy()
        is_fluid[not_solid] = lab[ni[not_solid], nj[not_solid]] == FLUID
        r = cell_id[fi[is_fluid], fj[is_fluid]]
        c = cell_id[ni[is_fluid], nj[is_fluid]]
        rows.append(r)
        cols.append(c)
        vals.append(np.full(r.shape[0], -1.0))
    # cells sealed on all sides have nothing to solve; pin their pressure
    sealed = diag == 0.0
    diag[sealed] = 1.0
    all_ids = np.arange(n_fluid)
    rows.append(all_ids)
    cols.append(all_ids)
    vals.append(diag)
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_fluid, n_fluid),
    ).tocsr()

    div = divergence(out, dims)
    rhs = -div[fi, fj] * params.rho * dims.dx**2 / params.dt
    rhs[sealed] = 0.0
    if not np.any(lab == AIR):
        # fully sealed tank: pure-Neumann problem, center the data
        rhs -= rhs.mean()
    p_vec, _, _ = pcg(A, rhs, tol=tol, max_iter=max_iter)

    p = np.zeros(dims.cell_shape)
    p[fi, fj] = p_vec

    scale = params.dt / (params.rho * dims.dx)
    # update faces between two non-solid cells when at least one is fluid
    u_active = ~u_forced.copy()
    u_active[1:-1, :] &= fluid[:-1, :] | fluid[1:, :]
    u_active[0, :] = False
    u_active[-1, :] = False
    gu = np.zeros(dims.u_shape)
    gu[1:-1, :] = p[1:, :] - p[:-1, :]
    out.u[u_active] -= scale * gu[u_active]

    v_active = ~v_forced.copy()
    v_active[:, 1:-1] &= fluid[:, :-1] | fluid[:, 1:]
    v_active[:, 0] = False
    v_active[:, -1] = False
    gv = np.zeros(dims.v_shape)
    gv[:, 1:-1] = p[:, 1:] - p[:, :-1]
    out.v[v_active] -= scale * gv[v_active]
    return out
