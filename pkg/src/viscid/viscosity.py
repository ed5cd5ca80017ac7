"""Implicit variational viscosity solve on the staggered grid.

The viscous update is the minimizer of a quadratic objective: the
volume-weighted squared velocity change plus the time-scaled viscous
dissipation of the symmetric velocity gradient,

    E(u) = sum_f rho V_f dx^2 (u_f - u_f_old)^2
         + 2 dt [ sum_cells  mu_c V_c dx^2 (du/dx^2 + dv/dy^2)
                + sum_nodes  mu_n V_n dx^2 * 2 eps_xy^2 ],

with the normal strain rates sampled at cell centers and the shear strain
``eps_xy = (du/dy + dv/dx)/2`` at interior corners. Corner terms on the
domain boundary are dropped, which leaves the box walls shear-free
(free-slip); wall impermeability is the pressure projection's job. Faces
whose dual cell is mostly inside a solid are pinned to the solid velocity;
partially overlapped quadrature regions couple those pinned faces to their
free neighbours, which moves known terms onto the right-hand side.

Stationarity of ``E`` gives the SPD system ``(M + K) u = M u_old + g`` that
:func:`assemble` builds and :func:`solve` inverts with preconditioned
conjugate gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError
from .grid import GridDims, MacVelocity2, SolidSdf2, VolumeFractions2, occupancy_fractions
from .linsys import pcg
from .symgrid import U_FACES, V_FACES

SOLID_PIN_FRACTION = 0.9  # dual-cell solid overlap beyond which a face takes the solid velocity


@dataclass
class FluidParams:
    """Material and timestep parameters; ``mu`` is a scalar or per-cell field."""

    rho: float
    mu: float | np.ndarray
    dt: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if np.any(np.asarray(self.mu) < 0):
            raise ValueError("mu must be non-negative")

    def mu_cells(self, dims: GridDims) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.mu, dtype=float), dims.cell_shape)


def u_index(i, j, dims: GridDims):
    """Flat dof index of x-face ``(i, j)``."""
    return i * dims.ny + j


def v_index(i, j, dims: GridDims):
    """Flat dof index of y-face ``(i, j)``."""
    return (dims.nx + 1) * dims.ny + i * (dims.ny + 1) + j


def n_dofs(dims: GridDims) -> int:
    return (dims.nx + 1) * dims.ny + dims.nx * (dims.ny + 1)


def pack(vel: MacVelocity2) -> np.ndarray:
    """Flatten a staggered field into the dof vector (u block then v block)."""
    return np.concatenate([vel.u.ravel(), vel.v.ravel()])


def unpack(x: np.ndarray, dims: GridDims) -> MacVelocity2:
    nu = (dims.nx + 1) * dims.ny
    return MacVelocity2(
        x[:nu].reshape(dims.u_shape).copy(),
        x[nu:].reshape(dims.v_shape).copy(),
    )


def mass_arrays(vols: VolumeFractions2, params: FluidParams, dims: GridDims):
    """Volume-weighted face masses (kg) for both face families."""
    scale = params.rho * dims.dx**2
    return scale * vols.u_face, scale * vols.v_face


def quadrature_weights(vols: VolumeFractions2, params: FluidParams, dims: GridDims):
    """Dissipation quadrature weights for cells and interior corners.

    Cell weights multiply ``du/dx^2 + dv/dy^2``; corner weights multiply
    ``2 eps_xy^2``. The corner viscosity is the mean of its four adjacent
    cells. Both carry the ``2 dt`` dissipation prefactor and the cell area.
    """
    mu_c = params.mu_cells(dims)
    w_cell = 2.0 * params.dt * mu_c * vols.cell * dims.dx**2
    mu_n = 0.25 * (mu_c[:-1, :-1] + mu_c[1:, :-1] + mu_c[:-1, 1:] + mu_c[1:, 1:])
    w_node = 2.0 * params.dt * mu_n * vols.node[1:-1, 1:-1] * dims.dx**2
    return w_cell, w_node


def solid_face_fractions(solid: SolidSdf2, dims: GridDims):
    """Solid occupancy of every face's dual cell, per family."""
    if solid.D.shape != dims.sym_shape:
        raise ValueError(f"solid SDF shape {solid.D.shape} != {dims.sym_shape}")
    occ = occupancy_fractions(solid.D)
    return occ[U_FACES], occ[V_FACES]


@dataclass
class SparseSpdSystem:
    """Assembled viscosity system ``A x = b`` plus the dof bookkeeping.

    ``constrained`` marks pinned and untouched dofs (identity rows);
    ``x0`` is the consistent starting vector (the old velocity with pinned
    values substituted).
    """

    A: sp.csr_matrix
    b: np.ndarray
    dims: GridDims
    constrained: np.ndarray  # bool (N,)
    x0: np.ndarray

    @property
    def n(self) -> int:
        return self.b.shape[0]


def assemble(
    vel_old: MacVelocity2,
    vols: VolumeFractions2,
    solid: SolidSdf2,
    params: FluidParams,
    dims: GridDims,
    solid_vel: MacVelocity2 | None = None,
) -> SparseSpdSystem:
    """Build the SPD system whose solution minimizes the viscous objective.

    Faces with zero mass and zero adjacent dissipation weight are left at
    their old velocity through identity rows; faces pinned by solids get
    identity rows carrying the solid velocity.
    """
    nx, ny = dims.nx, dims.ny
    n = n_dofs(dims)
    u_old_flat = pack(vel_old)

    m_u, m_v = mass_arrays(vols, params, dims)
    w_cell, w_node = quadrature_weights(vols, params, dims)
    inv_dx2 = 1.0 / dims.dx**2

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    rows_parts, cols_parts, vals_parts = [], [], []
    touched = np.zeros(n, dtype=bool)

    def add_pair_terms(q, dof_a, dof_b):
        """Accumulate q*(x_a - x_b)^2 for arrays of equal shape."""
        live = q > 0.0
        qa, a, b = q[live], dof_a[live], dof_b[live]
        rows_parts.append(np.concatenate([a, b, a, b]))
        cols_parts.append(np.concatenate([a, b, b, a]))
        vals_parts.append(np.concatenate([qa, qa, -qa, -qa]))
        touched[a] = True
        touched[b] = True

    # Normal strain terms, one x- and one y-difference per wet cell.
    q_c = (w_cell * inv_dx2).ravel()
    du_a = u_index(ii + 1, jj, dims).ravel()
    du_b = u_index(ii, jj, dims).ravel()
    add_pair_terms(q_c, du_a, du_b)
    dv_a = v_index(ii, jj + 1, dims).ravel()
    dv_b = v_index(ii, jj, dims).ravel()
    add_pair_terms(q_c, dv_a, dv_b)

    # Shear terms at interior corners: q * (u_t - u_b + v_r - v_l)^2 with
    # q = w_node / (2 dx^2); expands to a symmetric 4x4 signed block.
    ni, nj = np.meshgrid(np.arange(1, nx), np.arange(1, ny), indexing="ij")
    q_n = (w_node * 0.5 * inv_dx2).ravel()
    live = q_n > 0.0
    if np.any(live):
        q_live = q_n[live]
        dofs = np.stack(
            [
                u_index(ni, nj, dims).ravel()[live],
                u_index(ni, nj - 1, dims).ravel()[live],
                v_index(ni, nj, dims).ravel()[live],
                v_index(ni - 1, nj, dims).ravel()[live],
            ]
        )
        signs = np.array([1.0, -1.0, 1.0, -1.0])
        for a in range(4):
            for c in range(4):
                rows_parts.append(dofs[a])
                cols_parts.append(dofs[c])
                vals_parts.append(q_live * (signs[a] * signs[c]))
        touched[dofs.ravel()] = True

    # Mass terms.
    masses = np.concatenate([m_u.ravel(), m_v.ravel()])
    wet = masses > 0.0
    dof_wet = np.nonzero(wet)[0]
    rows_parts.append(dof_wet)
    cols_parts.append(dof_wet)
    vals_parts.append(masses[dof_wet])
    touched[dof_wet] = True
    b = np.where(wet, masses * u_old_flat, 0.0)

    # Pinned faces: mostly-solid dual cells take the solid velocity.
    sf_u, sf_v = solid_face_fractions(solid, dims)
    pinned = np.concatenate([(sf_u > SOLID_PIN_FRACTION).ravel(), (sf_v > SOLID_PIN_FRACTION).ravel()])
    pin_values = np.zeros(n) if solid_vel is None else pack(solid_vel)

    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    vals = np.concatenate(vals_parts)

    # Eliminate pinned dofs: drop their rows, push their columns to the rhs.
    keep = ~pinned[rows] & ~pinned[cols]
    move = ~pinned[rows] & pinned[cols]
    np.subtract.at(b, rows[move], vals[move] * pin_values[cols[move]])
    rows, cols, vals = rows[keep], cols[keep], vals[keep]

    # Identity rows: pinned faces and faces no quadrature term touches.
    identity = pinned | ~touched
    ident_idx = np.nonzero(identity)[0]
    rows = np.concatenate([rows, ident_idx])
    cols = np.concatenate([cols, ident_idx])
    vals = np.concatenate([vals, np.ones(ident_idx.shape[0])])
    b[pinned] = pin_values[pinned]
    b[~touched & ~pinned] = u_old_flat[~touched & ~pinned]

    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()

    asym = abs(A - A.T).max()
    scale = abs(A).max()
    if asym > 1e-9 * max(scale, 1e-300):
        raise AssemblyError(f"assembled operator is not symmetric: max|A-A^T|={asym:.3e}")

    x0 = np.where(pinned, pin_values, u_old_flat)
    return SparseSpdSystem(A=A, b=b, dims=dims, constrained=identity, x0=x0)


def solve(
    system: SparseSpdSystem,
    tol: float = 1e-6,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """PCG solve of an assembled system; defaults to the consistent start."""
    start = system.x0 if x0 is None else x0
    x, _, _ = pcg(system.A, system.b, x0=start, tol=tol, max_iter=max_iter)
    return x


def viscosity_step(
    vel_old: MacVelocity2,
    vols: VolumeFractions2,
    solid: SolidSdf2,
    params: FluidParams,
    dims: GridDims,
    tol: float = 1e-6,
    max_iter: int | None = None,
    solid_vel: MacVelocity2 | None = None,
) -> tuple[MacVelocity2, MacVelocity2]:
    """One implicit viscosity update; returns the new field and its change."""
    system = assemble(vel_old, vols, solid, params, dims, solid_vel=solid_vel)
    x = solve(system, tol=tol, max_iter=max_iter)
    vel_new = unpack(x, dims)
    return vel_new, vel_new - vel_old
