"""The per-frame simulation loop over declarative scenes.

Stage order: particle-to-grid transfer, gravity, viscosity (classical
implicit solve or network inference), pressure projection, grid-to-particle
transfer, advection. The viscous update runs on the post-gravity field and
its velocity change is what the dataset records as the training label.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import apic, pressure, symgrid, unet, viscosity
from .dataset import DatasetWriter, FrameRecord
from .errors import SimulationError
from .grid import (
    GridDims,
    MacVelocity2,
    SolidSdf2,
    fluid_volumes,
    level_set_from_particles,
    velocity_gradients,
)
from .scene import Scene, pointer_solid, seed_particles
from .viscosity import FluidParams

SNAPSHOT_MAGIC = b"VFSNAP1"
SNAPSHOT_VERSION = 1

# level-set sphere radius as a multiple of the inter-particle seeding distance
PARTICLE_SPHERE_SCALE = 1.01


@dataclass
class StepDiagnostics:
    """Per-stage wall-clock timings (ms) and viscosity-stage bookkeeping."""

    frame: int
    timings: dict[str, float] = field(default_factory=dict)
    ke_before_viscosity: float = 0.0
    ke_after_viscosity: float = 0.0
    delta_max: float = 0.0
    max_speed: float = 0.0

    @property
    def total_ms(self) -> float:
        return sum(self.timings.values())


@dataclass
class RunReport:
    frames: int
    diagnostics: list[StepDiagnostics]

    def stage_stats(self) -> dict[str, dict[str, float]]:
        stats: dict[str, dict[str, float]] = {}
        if not self.diagnostics:
            return stats
        for stage in self.diagnostics[0].timings:
            samples = np.array([d.timings[stage] for d in self.diagnostics])
            stats[stage] = {
                "mean_ms": float(samples.mean()),
                "p50_ms": float(np.percentile(samples, 50)),
                "p90_ms": float(np.percentile(samples, 90)),
                "max_ms": float(samples.max()),
            }
        return stats


class Simulation:
    """Owns one scene's particle state and steps it with either solver.

    A single instance is single-owner (not thread-safe); independent
    instances can run concurrently.
    """

    def __init__(
        self,
        scene: Scene,
        solver: str = "classic",
        manifest: unet.WeightManifest | None = None,
        pcg_tol: float = 1e-8,
    ):
        if solver not in ("classic", "neural"):
            raise ValueError(f"unknown solver {solver!r}")
        if solver == "neural" and manifest is None:
            raise ValueError("neural solver needs a weight manifest")
        self.scene = scene
        self.solver = solver
        self.manifest = manifest
        self.pcg_tol = pcg_tol
        self.dims: GridDims = scene.dims()
        self.particles = seed_particles(scene, self.dims)
        self.frame = 0
        self.time = 0.0
        self._static_solid = scene.solid_sdf(self.dims)
        self._mu = scene.mu_field(self.dims)
        self._params = FluidParams(rho=scene.rho, mu=self._mu, dt=scene.dt)
        self.last_record: FrameRecord | None = None

    def set_solver(self, solver: str, manifest: unet.WeightManifest | None = None) -> None:
        """Switch solvers in place; particle state is preserved."""
        if solver not in ("classic", "neural"):
            raise ValueError(f"unknown solver {solver!r}")
        if solver == "neural":
            if manifest is None and self.manifest is None:
                raise ValueError("neural solver needs a weight manifest")
            if manifest is not None:
                self.manifest = manifest
        self.solver = solver

    def kinetic_energy(self) -> float:
        v = self.particles.velocities
        return 0.5 * self.particles.mass * float(np.sum(v * v))

    def _solid_for_frame(self, pointer) -> tuple[SolidSdf2, MacVelocity2 | None]:
        if pointer is None:
            return self._static_solid, None
        pos, radius, pvel = pointer
        solid = pointer_solid(pos, radius, self.dims, extra_shapes=self.scene.solids)
        sv = MacVelocity2.zeros(self.dims)
        sv.u[:] = pvel[0]
        sv.v[:] = pvel[1]
        return solid, sv

    def _labels(self, solid: SolidSdf2) -> pressure.CellLabels:
        lab = np.full(self.dims.cell_shape, pressure.AIR, dtype=np.int8)
        if len(self.particles):
            idx = np.floor(self.particles.positions / self.dims.dx).astype(np.int64)
            idx[:, 0] = np.clip(idx[:, 0], 0, self.dims.nx - 1)
            idx[:, 1] = np.clip(idx[:, 1], 0, self.dims.ny - 1)
            lab[idx[:, 0], idx[:, 1]] = pressure.FLUID
        solid_cells = solid.D[symgrid.CELLS] <= 0.0
        lab[solid_cells] = pressure.SOLID
        return pressure.CellLabels(lab)

    def step(self, pointer=None, record_dataset: bool = False) -> StepDiagnostics:
        """Advance one frame. ``pointer`` is ``((x, y), radius, (vx, vy))``.

        With ``record_dataset`` the encoded inputs and the classical
        solver's velocity change are kept in ``last_record``.
        """
        diag = StepDiagnostics(frame=self.frame)
        dims, scene = self.dims, self.scene
        try:
            t0 = time.perf_counter()
            vel, (mass_u, mass_v) = apic.p2g(self.particles, dims)
            vel = apic.extend_velocity(vel, mass_u, mass_v)
            diag.timings["p2g"] = (time.perf_counter() - t0) * 1000

            t0 = time.perf_counter()
            vel.u += scene.gravity[0] * scene.dt
            vel.v += scene.gravity[1] * scene.dt
            diag.timings["gravity"] = (time.perf_counter() - t0) * 1000

            t0 = time.perf_counter()
            solid, solid_vel = self._solid_for_frame(pointer)
            spacing = 0.5 * dims.dx
            phi = level_set_from_particles(
                self.particles.positions, dims, PARTICLE_SPHERE_SCALE * spacing
            )
            vols = fluid_volumes(phi, dims)
            labels = self._labels(solid)
            diag.timings["geometry"] = (time.perf_counter() - t0) * 1000

            t0 = time.perf_counter()
            stack = None
            if self.solver == "neural" or record_dataset:
                grads = velocity_gradients(vel, dims)
                want_coeff = (
                    self.manifest.in_channels == 7
                    if self.solver == "neural"
                    else scene.has_variable_mu()
                )
                coeff = self._mu if want_coeff else None
                stack = symgrid.encode(grads, vols, solid, dims, coeff=coeff)
            m_u, m_v = viscosity.mass_arrays(vols, self._params, dims)
            diag.ke_before_viscosity = 0.5 * float(
                np.sum(m_u * vel.u**2) + np.sum(m_v * vel.v**2)
            )
            if self.solver == "classic":
                vel_new, delta = viscosity.viscosity_step(
                    vel, vols, solid, self._params, dims,
                    tol=self.pcg_tol, solid_vel=solid_vel,
                )
            else:
                spec = symgrid.PaddingSpec(multiple=1 << self.manifest.depth, mode="centered")
                padded, spec = symgrid.pad(stack, spec)
                out = unet.forward(padded, self.manifest)
                delta = symgrid.decode(symgrid.unpad(out, spec, dims), dims)
                vel_new = vel + delta
            diag.ke_after_viscosity = 0.5 * float(
                np.sum(m_u * vel_new.u**2) + np.sum(m_v * vel_new.v**2)
            )
            diag.delta_max = float(max(np.abs(delta.u).max(), np.abs(delta.v).max()))
            if record_dataset:
                if self.solver != "classic":
                    raise ValueError("dataset labels require the classical solver")
                self.last_record = FrameRecord(
                    frame=self.frame,
                    dims=dims,
                    dt=scene.dt,
                    rho=scene.rho,
                    mu=np.asarray(
                        np.broadcast_to(np.asarray(self._mu, dtype=np.float32), dims.cell_shape)
                    ),
                    stack=stack.data.astype(np.float32),
                    label_du=delta.u.astype(np.float32),
                    label_dv=delta.v.astype(np.float32),
                )
            diag.timings["viscosity"] = (time.perf_counter() - t0) * 1000

            t0 = time.perf_counter()
            vel_new = pressure.project(
                vel_new, labels, self._params, dims, tol=self.pcg_tol, solid_vel=solid_vel
            )
            diag.timings["pressure"] = (time.perf_counter() - t0) * 1000

            t0 = time.perf_counter()
            self.particles = apic.g2p(vel_new, self.particles, dims)
            diag.timings["g2p"] = (time.perf_counter() - t0) * 1000

            t0 = time.perf_counter()
            self.particles = apic.advect(self.particles, scene.dt, dims, solid)
            diag.timings["advect"] = (time.perf_counter() - t0) * 1000
        except Exception as exc:  # attach the frame index for callers
            if isinstance(exc, SimulationError):
                raise
            raise SimulationError(self.frame, _current_stage(diag), exc) from exc

        if len(self.particles):
            diag.max_speed = float(np.max(np.linalg.norm(self.particles.velocities, axis=1)))
        self.frame += 1
        self.time += scene.dt
        return diag


def _current_stage(diag: StepDiagnostics) -> str:
    order = ["p2g", "gravity", "geometry", "viscosity", "pressure", "g2p", "advect"]
    for stage in order:
        if stage not in diag.timings:
            return stage
    return "post"


def save_snapshot(path, frame: int, sim_time: float, particles: apic.ParticleSet) -> None:
    """Binary particle snapshot, little-endian.

    Layout: magic ``VFSNAP1``, u32 version, u32 frame, f64 time, u32 count,
    then count*2 f64 positions, count*2 f64 velocities, count i32 colors.
    """
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(struct.pack("<IIdI", SNAPSHOT_VERSION, frame, sim_time, len(particles)))
        f.write(np.ascontiguousarray(particles.positions, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(particles.velocities, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(particles.color, dtype="<i4").tobytes())


def load_snapshot(path):
    """Read back a snapshot as ``(frame, time, positions, velocities, colors)``."""
    with open(path, "rb") as f:
        magic = f.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r}")
        version, frame, sim_time, count = struct.unpack("<IIdI", f.read(20))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        pos = np.frombuffer(f.read(16 * count), dtype="<f8").reshape(count, 2).copy()
        vel = np.frombuffer(f.read(16 * count), dtype="<f8").reshape(count, 2).copy()
        color = np.frombuffer(f.read(4 * count), dtype="<i4").copy()
    return frame, sim_time, pos, vel, color


def run(
    scene: Scene,
    frames: int,
    solver: str = "classic",
    manifest: unet.WeightManifest | None = None,
    snapshots_dir=None,
    dataset_path=None,
    pcg_tol: float = 1e-8,
    progress: bool = False,
) -> RunReport:
    """Run a scene for a frame count, emitting any requested sinks."""
    if frames < 1:
        raise ValueError("frames must be at least 1")
    sim = Simulation(scene, solver=solver, manifest=manifest, pcg_tol=pcg_tol)
    writer = None
    if dataset_path is not None:
        writer = DatasetWriter(dataset_path, scene.name, sim.dims, scene.dt, scene.rho)
    snap_dir = None
    if snapshots_dir is not None:
        snap_dir = Path(snapshots_dir)
        snap_dir.mkdir(parents=True, exist_ok=True)
    diagnostics = []
    try:
        for k in range(frames):
            diag = sim.step(record_dataset=writer is not None)
            diagnostics.append(diag)
            if writer is not None:
                writer.write(sim.last_record)
            if snap_dir is not None:
                save_snapshot(snap_dir / f"frame_{k:06d}.vfsnap", k, sim.time, sim.particles)
            if progress and (k + 1) % 50 == 0:
                print(f"frame {k + 1}/{frames} max_speed={diag.max_speed:.3f} m/s", flush=True)
    finally:
        if writer is not None:
            writer.close()
    return RunReport(frames=frames, diagnostics=diagnostics)
