"""Dense half-spacing packing of staggered fluid quantities for the CNN.

A staggered ``(nx, ny)`` grid stores x-velocity on ``(nx+1, ny)`` faces and
y-velocity on ``(nx, ny+1)`` faces, so no two quantities share a shape. The
half-spacing grid of shape ``(2nx+1, 2ny+1)`` co-registers every sample
family without interpolation:

* cell center ``(i, j)``   -> position ``(2i+1, 2j+1)``
* corner      ``(i, j)``   -> position ``(2i,   2j)``
* u-face      ``(i, j)``   -> position ``(2i,   2j+1)``
* v-face      ``(i, j)``   -> position ``(2i+1, 2j)``

The four image sets are disjoint and cover the grid. Positions a channel
does not own are exactly zero so they carry no signal into the network.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import GridDims, Gradients2, MacVelocity2, SolidSdf2, VolumeFractions2, solid_indicator

CH_DU_DX = 0
CH_DV_DY = 1
CH_DU_DY = 2
CH_DV_DX = 3
CH_VOLUME = 4
CH_SOLID = 5
CH_COEFF = 6

CHANNEL_NAMES = ("du_dx", "dv_dy", "du_dy", "dv_dx", "fluid_volume", "solid_indicator", "visc_coeff")

# Family slices into a (2nx+1, 2ny+1) array.
CELLS = (slice(1, None, 2), slice(1, None, 2))
NODES = (slice(0, None, 2), slice(0, None, 2))
U_FACES = (slice(0, None, 2), slice(1, None, 2))
V_FACES = (slice(1, None, 2), slice(0, None, 2))


class SymIndexMap:
    """Index arithmetic between staggered samples and half-spacing positions."""

    @staticmethod
    def cell(i, j):
        return 2 * i + 1, 2 * j + 1

    @staticmethod
    def node(i, j):
        return 2 * i, 2 * j

    @staticmethod
    def u_face(i, j):
        return 2 * i, 2 * j + 1

    @staticmethod
    def v_face(i, j):
        return 2 * i + 1, 2 * j

    @staticmethod
    def family_masks(dims: GridDims) -> dict[str, np.ndarray]:
        """Boolean ownership masks; they partition the grid."""
        shape = dims.sym_shape
        masks = {}
        for name, sl in (("cell", CELLS), ("node", NODES), ("u_face", U_FACES), ("v_face", V_FACES)):
            m = np.zeros(shape, dtype=bool)
            m[sl] = True
            masks[name] = m
        return masks


@dataclass
class ChannelStack:
    """Channel tensor on the half-spacing grid, fixed channel order.

    Channels: du/dx, dv/dy, du/dy, dv/dx, fluid volume, solid indicator,
    and optionally the per-cell viscosity coefficient.
    """

    data: np.ndarray  # (C, 2nx+1, 2ny+1)
    dims: GridDims

    def __post_init__(self):
        if self.data.shape[1:] != self.dims.sym_shape:
            raise ValueError(f"stack shape {self.data.shape} != {self.dims.sym_shape}")
        if self.data.shape[0] not in (6, 7):
            raise ValueError(f"expected 6 or 7 channels, got {self.data.shape[0]}")

    @property
    def has_coeff(self) -> bool:
        return self.data.shape[0] == 7


def encode(
    grads: Gradients2,
    vols: VolumeFractions2,
    solid: SolidSdf2,
    dims: GridDims,
    coeff=None,
) -> ChannelStack:
    """Pack derivatives, occupancy and solid state into co-registered channels.

    Derivative channels are zeroed where their family has no fluid volume;
    the velocity field is undefined there, and a fluid in rigid-body motion
    must encode to all-zero derivative channels. The volume channel carries
    every family's occupancy at its own position. ``coeff``, if given, is a
    scalar or per-cell dynamic viscosity written at cell positions with
    positive fluid volume.
    """
    n_ch = 6 if coeff is None else 7
    data = np.zeros((n_ch,) + dims.sym_shape)
    data[CH_DU_DX][CELLS] = grads.du_dx * (vols.cell > 0.0)
    data[CH_DV_DY][CELLS] = grads.dv_dy * (vols.cell > 0.0)
    data[CH_DU_DY][NODES] = grads.du_dy * (vols.node > 0.0)
    data[CH_DV_DX][NODES] = grads.dv_dx * (vols.node > 0.0)
    data[CH_VOLUME][CELLS] = vols.cell
    data[CH_VOLUME][U_FACES] = vols.u_face
    data[CH_VOLUME][V_FACES] = vols.v_face
    data[CH_VOLUME][NODES] = vols.node
    data[CH_SOLID] = solid_indicator(solid)
    if coeff is not None:
        mu = np.broadcast_to(np.asarray(coeff, dtype=float), dims.cell_shape)
        data[CH_COEFF][CELLS] = np.where(vols.cell > 0.0, mu, 0.0)
    return ChannelStack(data=data, dims=dims)


def decode(output: np.ndarray, dims: GridDims) -> MacVelocity2:
    """Read the velocity-change field out of a two-channel network output.

    Channel 0 is read at u-face positions, channel 1 at v-face positions;
    everything else is ignored.
    """
    if output.shape != (2,) + dims.sym_shape:
        raise ValueError(f"output shape {output.shape} != {(2,) + dims.sym_shape}")
    du = np.ascontiguousarray(output[0][U_FACES], dtype=np.float64)
    dv = np.ascontiguousarray(output[1][V_FACES], dtype=np.float64)
    return MacVelocity2(du, dv)


@dataclass
class PaddingSpec:
    """How to grow a stack so both spatial dims divide ``multiple``.

    ``mode`` is ``"centered"`` (deterministic even split, inference default)
    or ``"random"`` (training augmentation). ``off_x``/``off_y`` record the
    number of rows/columns inserted before the content; they are filled in
    on the spec returned by :func:`pad` so the padding can be inverted.
    """

    multiple: int
    mode: str = "centered"
    off_x: int | None = None
    off_y: int | None = None

    def __post_init__(self):
        if self.multiple < 1 or (self.multiple & (self.multiple - 1)) != 0:
            raise ValueError(f"padding multiple must be a power of two, got {self.multiple}")
        if self.mode not in ("centered", "random"):
            raise ValueError(f"unknown padding mode {self.mode!r}")


def _pad_amounts(size: int, multiple: int) -> int:
    return (-size) % multiple


def pad(
    stack: ChannelStack, spec: PaddingSpec, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, PaddingSpec]:
    """Pad a stack to dimensions divisible by ``spec.multiple``.

    Zero padding everywhere except the solid-indicator channel, which pads
    with ones (outside the domain behaves like solid). Returns the padded
    array and a copy of the spec carrying the applied offsets.
    """
    h, w = stack.dims.sym_shape
    pad_h = _pad_amounts(h, spec.multiple)
    pad_w = _pad_amounts(w, spec.multiple)
    if spec.mode == "random":
        if rng is None:
            rng = np.random.default_rng()
        off_x = int(rng.integers(0, pad_h + 1))
        off_y = int(rng.integers(0, pad_w + 1))
    else:
        off_x = pad_h // 2
        off_y = pad_w // 2
    out = np.zeros((stack.data.shape[0], h + pad_h, w + pad_w))
    out[CH_SOLID] = 1.0
    out[:, off_x : off_x + h, off_y : off_y + w] = stack.data
    return out, replace(spec, off_x=off_x, off_y=off_y)


def unpad(padded: np.ndarray, spec: PaddingSpec, dims: GridDims) -> np.ndarray:
    """Slice the content region back out of a padded tensor."""
    if spec.off_x is None or spec.off_y is None:
        raise ValueError("padding spec carries no recorded offsets")
    h, w = dims.sym_shape
    return padded[:, spec.off_x : spec.off_x + h, spec.off_y : spec.off_y + w]


def transpose_stack(stack: ChannelStack) -> ChannelStack:
    """Swap the grid axes: exchanges the u/v roles of every channel."""
    order = [CH_DV_DY, CH_DU_DX, CH_DV_DX, CH_DU_DY, CH_VOLUME, CH_SOLID]
    if stack.has_coeff:
        order.append(CH_COEFF)
    data = stack.data[order].transpose(0, 2, 1).copy()
    dims = GridDims(stack.dims.ny, stack.dims.nx, stack.dims.dx)
    return ChannelStack(data=data, dims=dims)


def mirror_stack_x(stack: ChannelStack) -> ChannelStack:
    """Reflect about the x midplane: cross-derivative channels flip sign."""
    data = stack.data[:, ::-1, :].copy()
    data[CH_DU_DY] = -data[CH_DU_DY]
    data[CH_DV_DX] = -data[CH_DV_DX]
    return ChannelStack(data=data, dims=stack.dims)
