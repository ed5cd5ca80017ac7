"""Half-spacing channel packing: bijection, symmetry, padding."""

import numpy as np
import pytest

from viscid.grid import (
    GridDims,
    LevelSet2,
    MacVelocity2,
    SolidSdf2,
    fluid_volumes,
    velocity_gradients,
)
from viscid.symgrid import (
    CELLS,
    CH_COEFF,
    CH_DU_DX,
    CH_DU_DY,
    CH_DV_DX,
    CH_DV_DY,
    CH_SOLID,
    CH_VOLUME,
    NODES,
    U_FACES,
    V_FACES,
    ChannelStack,
    PaddingSpec,
    SymIndexMap,
    decode,
    encode,
    mirror_stack_x,
    pad,
    transpose_stack,
    unpad,
)

from conftest import all_fluid_vols, far_solid


def random_inputs(rng, nx=9, ny=7, dx=0.1):
    dims = GridDims(nx, ny, dx)
    vel = MacVelocity2(rng.standard_normal(dims.u_shape), rng.standard_normal(dims.v_shape))
    phi = rng.standard_normal(dims.node_shape) * 0.2
    vols = fluid_volumes(LevelSet2(phi), dims)
    solid = SolidSdf2(rng.standard_normal(dims.sym_shape) * 0.3)
    return dims, vel, phi, vols, solid


def mirror_x_velocity(vel: MacVelocity2) -> MacVelocity2:
    return MacVelocity2(-vel.u[::-1, :].copy(), vel.v[::-1, :].copy())


class TestIndexMap:
    @pytest.mark.parametrize("nx,ny", [(4, 4), (9, 5), (128, 96)])
    def test_families_partition_grid(self, nx, ny):
        dims = GridDims(nx, ny, 0.1)
        masks = SymIndexMap.family_masks(dims)
        total = sum(m.astype(int) for m in masks.values())
        assert np.all(total == 1)
        assert masks["cell"].sum() == nx * ny
        assert masks["node"].sum() == (nx + 1) * (ny + 1)
        assert masks["u_face"].sum() == (nx + 1) * ny
        assert masks["v_face"].sum() == nx * (ny + 1)

    def test_positions(self):
        assert SymIndexMap.cell(2, 3) == (5, 7)
        assert SymIndexMap.node(2, 3) == (4, 6)
        assert SymIndexMap.u_face(2, 3) == (4, 7)
        assert SymIndexMap.v_face(2, 3) == (5, 6)


class TestEncode:
    def test_constant_velocity_zero_derivative_channels(self):
        dims = GridDims(6, 5, 0.2)
        vel = MacVelocity2(np.full(dims.u_shape, 2.0), np.full(dims.v_shape, -1.0))
        stack = encode(velocity_gradients(vel, dims), all_fluid_vols(dims), far_solid(dims), dims)
        for ch in (CH_DU_DX, CH_DV_DY, CH_DU_DY, CH_DV_DX):
            assert np.all(stack.data[ch] == 0.0)

    def test_empty_scene(self, rng):
        dims = GridDims(6, 5, 0.2)
        vel = MacVelocity2(rng.standard_normal(dims.u_shape), rng.standard_normal(dims.v_shape))
        vols = fluid_volumes(LevelSet2(np.full(dims.node_shape, 1.0)), dims)
        D = rng.standard_normal(dims.sym_shape)
        stack = encode(velocity_gradients(vel, dims), vols, SolidSdf2(D), dims, coeff=1.5)
        assert np.all(stack.data[CH_VOLUME] == 0.0)
        assert np.all(stack.data[CH_COEFF] == 0.0)
        np.testing.assert_array_equal(stack.data[CH_SOLID], (D <= 0).astype(float))
        # derivative channels masked by zero fluid volume
        for ch in (CH_DU_DX, CH_DV_DY, CH_DU_DY, CH_DV_DX):
            assert np.all(stack.data[ch] == 0.0)

    def test_zero_fill_outside_families(self, rng):
        dims, vel, phi, vols, solid = random_inputs(rng)
        stack = encode(velocity_gradients(vel, dims), vols, solid, dims, coeff=2.0)
        masks = SymIndexMap.family_masks(dims)
        assert np.all(stack.data[CH_DU_DX][~masks["cell"]] == 0.0)
        assert np.all(stack.data[CH_DV_DY][~masks["cell"]] == 0.0)
        assert np.all(stack.data[CH_DU_DY][~masks["node"]] == 0.0)
        assert np.all(stack.data[CH_DV_DX][~masks["node"]] == 0.0)
        assert np.all(stack.data[CH_COEFF][~masks["cell"]] == 0.0)

    def test_volume_channel_carries_all_families(self, rng):
        dims, vel, phi, vols, solid = random_inputs(rng)
        stack = encode(velocity_gradients(vel, dims), vols, solid, dims)
        np.testing.assert_array_equal(stack.data[CH_VOLUME][CELLS], vols.cell)
        np.testing.assert_array_equal(stack.data[CH_VOLUME][U_FACES], vols.u_face)
        np.testing.assert_array_equal(stack.data[CH_VOLUME][V_FACES], vols.v_face)
        np.testing.assert_array_equal(stack.data[CH_VOLUME][NODES], vols.node)

    def test_coeff_only_on_wet_cells(self, rng):
        dims, vel, phi, vols, solid = random_inputs(rng)
        stack = encode(velocity_gradients(vel, dims), vols, solid, dims, coeff=3.0)
        coeff = stack.data[CH_COEFF][CELLS]
        np.testing.assert_array_equal(coeff, np.where(vols.cell > 0, 3.0, 0.0))

    def test_mirror_equivariance_exact(self, rng):
        dims, vel, phi, vols, solid = random_inputs(rng, nx=8, ny=6)
        stack = encode(velocity_gradients(vel, dims), vols, solid, dims, coeff=1.2)

        vel_m = mirror_x_velocity(vel)
        phi_m = phi[::-1, :].copy()
        solid_m = SolidSdf2(solid.D[::-1, :].copy())
        vols_m = fluid_volumes(LevelSet2(phi_m), dims)
        stack_m = encode(velocity_gradients(vel_m, dims), vols_m, solid_m, dims, coeff=1.2)

        np.testing.assert_array_equal(stack_m.data, mirror_stack_x(stack).data)

    def test_transpose_equivariance_exact(self, rng):
        dims, vel, phi, vols, solid = random_inputs(rng, nx=8, ny=6)
        stack = encode(velocity_gradients(vel, dims), vols, solid, dims, coeff=0.5)

        dims_t = GridDims(dims.ny, dims.nx, dims.dx)
        vel_t = MacVelocity2(vel.v.T.copy(), vel.u.T.copy())
        vols_t = fluid_volumes(LevelSet2(phi.T.copy()), dims_t)
        solid_t = SolidSdf2(solid.D.T.copy())
        stack_t = encode(velocity_gradients(vel_t, dims_t), vols_t, solid_t, dims_t, coeff=0.5)

        np.testing.assert_array_equal(stack_t.data, transpose_stack(stack).data)


class TestDecode:
    def test_roundtrip_bijection(self, rng):
        dims = GridDims(10, 6, 0.1)
        du = rng.standard_normal(dims.u_shape)
        dv = rng.standard_normal(dims.v_shape)
        out = np.zeros((2,) + dims.sym_shape)
        out[0][U_FACES] = du
        out[1][V_FACES] = dv
        got = decode(out, dims)
        np.testing.assert_array_equal(got.u, du)
        np.testing.assert_array_equal(got.v, dv)

    def test_zero_tensor(self):
        dims = GridDims(5, 5, 0.1)
        got = decode(np.zeros((2,) + dims.sym_shape), dims)
        assert np.all(got.u == 0.0) and np.all(got.v == 0.0)

    def test_ignores_non_owned_positions(self, rng):
        dims = GridDims(7, 9, 0.1)
        out = rng.standard_normal((2,) + dims.sym_shape)
        base = decode(out, dims)
        noisy = out.copy()
        masks = SymIndexMap.family_masks(dims)
        noisy[0][~masks["u_face"]] += rng.standard_normal((~masks["u_face"]).sum())
        noisy[1][~masks["v_face"]] += rng.standard_normal((~masks["v_face"]).sum())
        got = decode(noisy, dims)
        np.testing.assert_array_equal(got.u, base.u)
        np.testing.assert_array_equal(got.v, base.v)


class TestPadding:
    def test_already_divisible_identity(self, rng):
        dims = GridDims(8, 8, 0.1)  # sym 17x17 -> pad to 20 with multiple 4? no: 17->20
        # choose dims so sym shape is divisible: (2*n+1) divisible by 1 only;
        # use multiple 1 for the exact-identity case
        stack = ChannelStack(data=rng.standard_normal((6,) + dims.sym_shape), dims=dims)
        padded, spec = pad(stack, PaddingSpec(multiple=1, mode="centered"))
        assert spec.off_x == 0 and spec.off_y == 0
        np.testing.assert_array_equal(padded, stack.data)

    def test_paper_scale_padding(self, rng):
        # 100x100 grid -> 201x201 channels -> multiple 16 pads to 208x208
        dims = GridDims(100, 100, 0.02)
        stack = ChannelStack(data=rng.standard_normal((6,) + dims.sym_shape), dims=dims)
        padded, spec = pad(stack, PaddingSpec(multiple=16, mode="centered"))
        assert padded.shape == (6, 208, 208)
        assert spec.off_x == 3 and spec.off_y == 3
        # the solid channel pads with ones
        assert np.all(padded[CH_SOLID, :3, :] == 1.0)
        assert np.all(padded[CH_SOLID, -4:, :] == 1.0)
        assert np.all(padded[CH_DU_DX, :3, :] == 0.0)

    @pytest.mark.parametrize("mode", ["centered", "random"])
    def test_unpad_roundtrip(self, rng, mode):
        dims = GridDims(11, 7, 0.1)
        stack = ChannelStack(data=rng.standard_normal((7,) + dims.sym_shape), dims=dims)
        for _ in range(5):
            padded, spec = pad(stack, PaddingSpec(multiple=8, mode=mode), rng=rng)
            assert padded.shape[1] % 8 == 0 and padded.shape[2] % 8 == 0
            np.testing.assert_array_equal(unpad(padded, spec, dims), stack.data)

    def test_random_mode_varies_offsets(self, rng):
        dims = GridDims(11, 7, 0.1)
        stack = ChannelStack(data=rng.standard_normal((6,) + dims.sym_shape), dims=dims)
        offsets = set()
        for _ in range(20):
            _, spec = pad(stack, PaddingSpec(multiple=8, mode="random"), rng=rng)
            offsets.add((spec.off_x, spec.off_y))
        assert len(offsets) > 3

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            PaddingSpec(multiple=3)
        with pytest.raises(ValueError):
            PaddingSpec(multiple=4, mode="sideways")


class TestTiltPathology:
    """Asymmetric packing of the raw staggered fields breaks mirror
    symmetry at the channel level; the co-registered packing does not."""

    @staticmethod
    def naive_stack(vel: MacVelocity2) -> np.ndarray:
        # rectify (nx+1, ny) and (nx, ny+1) to a common shape by padding
        # one zero column/row on the high side of each
        nx1, ny = vel.u.shape
        u = np.zeros((nx1, ny + 1))
        u[:, :-1] = vel.u
        v = np.zeros((nx1, ny + 1))
        v[:-1, :] = vel.v
        return np.stack([u, v])

    def test_naive_packing_breaks_mirror(self, rng):
        dims = GridDims(8, 6, 0.1)
        vel = MacVelocity2(rng.standard_normal(dims.u_shape), rng.standard_normal(dims.v_shape))
        naive = self.naive_stack(vel)
        naive_m = self.naive_stack(mirror_x_velocity(vel))
        mirrored = naive[:, ::-1, :].copy()
        mirrored[0] = -mirrored[0]
        assert np.abs(naive_m - mirrored).max() > 1e-6

    def test_symmetric_encoding_with_centered_padding_preserves_mirror(self, rng):
        dims, vel, phi, vols, solid = random_inputs(rng, nx=8, ny=6)
        stack = encode(velocity_gradients(vel, dims), vols, solid, dims)
        vel_m = mirror_x_velocity(vel)
        vols_m = fluid_volumes(LevelSet2(phi[::-1, :].copy()), dims)
        solid_m = SolidSdf2(solid.D[::-1, :].copy())
        stack_m = encode(velocity_gradients(vel_m, dims), vols_m, solid_m, dims)

        spec = PaddingSpec(multiple=4, mode="centered")
        padded, sp = pad(stack, spec)
        padded_m, sp_m = pad(stack_m, spec)
        # content regions agree after inverting the recorded offsets; the
        # one-pixel split ambiguity of an odd total pad cannot reorder them
        content = unpad(padded, sp, dims)
        content_m = unpad(padded_m, sp_m, dims)
        np.testing.assert_array_equal(content_m, mirror_stack_x(stack).data)
        np.testing.assert_array_equal(
            content_m, mirror_stack_x(ChannelStack(data=content, dims=dims)).data
        )
