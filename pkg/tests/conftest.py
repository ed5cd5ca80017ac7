"""Shared fixtures and scene builders for the test suite."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from viscid.grid import (
    GridDims,
    LevelSet2,
    MacVelocity2,
    SolidSdf2,
    VolumeFractions2,
    fluid_volumes,
)
from viscid.viscosity import FluidParams

from oracles import smooth_random_phi


@dataclass
class ViscousScene:
    """Bundle of everything a viscosity solve needs."""

    dims: GridDims
    vel_old: MacVelocity2
    vols: VolumeFractions2
    solid: SolidSdf2
    params: FluidParams


def far_solid(dims: GridDims) -> SolidSdf2:
    far = np.hypot(dims.width, dims.height)
    return SolidSdf2(np.full(dims.sym_shape, far))


def disc_solid(dims: GridDims, center, radius) -> SolidSdf2:
    hs = 0.5 * dims.dx
    xs = np.arange(2 * dims.nx + 1) * hs
    ys = np.arange(2 * dims.ny + 1) * hs
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return SolidSdf2(np.hypot(X - center[0], Y - center[1]) - radius)


def all_fluid_vols(dims: GridDims) -> VolumeFractions2:
    return VolumeFractions2(
        cell=np.ones(dims.cell_shape),
        u_face=np.ones(dims.u_shape),
        v_face=np.ones(dims.v_shape),
        node=np.ones(dims.node_shape),
    )


def random_viscous_scene(
    rng: np.random.Generator,
    nx: int,
    ny: int,
    with_solid: bool = False,
    all_fluid: bool = False,
    mu=None,
) -> ViscousScene:
    dims = GridDims(nx, ny, float(rng.uniform(0.02, 0.1)))
    if all_fluid:
        vols = all_fluid_vols(dims)
    else:
        phi = smooth_random_phi(dims, rng, wet_bias=rng.uniform(0.0, 0.6))
        vols = fluid_volumes(LevelSet2(phi), dims)
    if with_solid and rng.uniform() < 0.7:
        center = (rng.uniform(0, dims.width), rng.uniform(0, dims.height))
        solid = disc_solid(dims, center, rng.uniform(0.1, 0.3) * dims.width)
    else:
        solid = far_solid(dims)
    if mu is None:
        mu = float(rng.uniform(0.05, 5.0))
    params = FluidParams(rho=float(rng.uniform(500, 2000)), mu=mu, dt=1.0 / 300.0)
    vel_old = MacVelocity2(
        rng.standard_normal(dims.u_shape), rng.standard_normal(dims.v_shape)
    )
    return ViscousScene(dims=dims, vel_old=vel_old, vols=vols, solid=solid, params=params)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
