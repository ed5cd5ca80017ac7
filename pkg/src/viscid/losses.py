"""Evaluation metrics: squared error, the normalized variational loss, and
the volume-weighted objective the implicit solver minimizes.

Two related functionals live here. :func:`variational_loss` is the
normalized training/evaluation metric: per-family mean squared velocity
change weighted by density, plus the time-scaled mean viscous dissipation
with all strain rates co-located at cell centers (corner shear samples are
averaged onto centers). :func:`viscous_objective` is the unnormalized,
occupancy-weighted discrete energy whose minimizer the classical solver
computes; it uses the solver's own quadrature (shear at interior corners).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridDims, Gradients2, MacVelocity2, VolumeFractions2, velocity_gradients
from .viscosity import FluidParams, mass_arrays, quadrature_weights


@dataclass
class LossReport:
    """Breakdown of the variational loss; ``l_v = inertia + dissipation``."""

    l2: float
    l_v: float
    inertia_term: float
    dissipation_term: float


def l2_error(pred: MacVelocity2, truth: MacVelocity2) -> float:
    """Mean squared difference over all u and v samples."""
    if pred.u.shape != truth.u.shape or pred.v.shape != truth.v.shape:
        raise ValueError("mismatched field shapes")
    sq = float(np.sum((pred.u - truth.u) ** 2) + np.sum((pred.v - truth.v) ** 2))
    return sq / (pred.u.size + pred.v.size)


def node_to_cell(node_field: np.ndarray) -> np.ndarray:
    """Average a corner-sampled field onto cell centers."""
    return 0.25 * (
        node_field[:-1, :-1] + node_field[1:, :-1] + node_field[:-1, 1:] + node_field[1:, 1:]
    )


def variational_loss_delta(
    delta: MacVelocity2,
    grads_old: Gradients2,
    params: FluidParams,
    dims: GridDims,
) -> LossReport:
    """Variational loss of ``vel_old + delta`` given the old-field gradients.

    This form needs only the velocity change and the pre-update derivative
    samples, which is exactly what the network's inputs and outputs carry.
    """
    rho = params.rho
    inertia = rho * (float(np.mean(delta.u**2)) + float(np.mean(delta.v**2)))

    gd = velocity_gradients(delta, dims)
    du_dx = grads_old.du_dx + gd.du_dx
    dv_dy = grads_old.dv_dy + gd.dv_dy
    du_dy_c = node_to_cell(grads_old.du_dy + gd.du_dy)
    dv_dx_c = node_to_cell(grads_old.dv_dx + gd.dv_dx)
    eps_xy = 0.5 * (du_dy_c + dv_dx_c)
    frob = du_dx**2 + dv_dy**2 + 2.0 * eps_xy**2
    dissipation = 2.0 * params.dt * float(np.mean(params.mu_cells(dims) * frob))

    l2 = (float(np.sum(delta.u**2)) + float(np.sum(delta.v**2))) / (delta.u.size + delta.v.size)
    return LossReport(
        l2=l2,
        l_v=inertia + dissipation,
        inertia_term=inertia,
        dissipation_term=dissipation,
    )


def variational_loss(
    vel: MacVelocity2,
    vel_old: MacVelocity2,
    params: FluidParams,
    dims: GridDims,
) -> LossReport:
    """Normalized variational loss of ``vel`` relative to ``vel_old``."""
    return variational_loss_delta(vel - vel_old, velocity_gradients(vel_old, dims), params, dims)


def viscous_objective(
    vel: MacVelocity2,
    vel_old: MacVelocity2,
    vols: VolumeFractions2,
    params: FluidParams,
    dims: GridDims,
) -> float:
    """Occupancy-weighted energy the implicit viscosity solve minimizes.

    Evaluated directly from the fields (no matrices), so it doubles as an
    independent check that the assembled system's solution is a minimizer.
    """
    m_u, m_v = mass_arrays(vols, params, dims)
    w_cell, w_node = quadrature_weights(vols, params, dims)
    inv_dx = 1.0 / dims.dx

    inertia = float(np.sum(m_u * (vel.u - vel_old.u) ** 2)) + float(
        np.sum(m_v * (vel.v - vel_old.v) ** 2)
    )

    du_dx = np.diff(vel.u, axis=0) * inv_dx
    dv_dy = np.diff(vel.v, axis=1) * inv_dx
    cell_part = float(np.sum(w_cell * (du_dx**2 + dv_dy**2)))

    du_dy = np.diff(vel.u, axis=1) * inv_dx  # corners j = 1..ny-1, all i
    dv_dx = np.diff(vel.v, axis=0) * inv_dx  # corners i = 1..nx-1, all j
    eps_xy = 0.5 * (du_dy[1:-1, :] + dv_dx[:, 1:-1])  # interior corners only
    node_part = float(np.sum(w_node * 2.0 * eps_xy**2))

    return inertia + cell_part + node_part
