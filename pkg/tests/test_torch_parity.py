"""Cross-framework check: the numpy forward pass against a torch build of
the same manifest. Skipped when torch is unavailable."""

import numpy as np
import pytest

torch = pytest.importorskip("torch")

from viscid.unet import UnetConfig, forward, init_manifest


def torch_forward(stack: np.ndarray, manifest) -> np.ndarray:
    by_name = {l.name: l for l in manifest.layers}
    x = torch.from_numpy(np.ascontiguousarray(stack, dtype=np.float32))[None]

    def conv_tanh(name, h):
        l = by_name[name]
        w = torch.from_numpy(l.weight)
        b = torch.from_numpy(l.bias)
        pad = l.weight.shape[2] // 2
        return torch.tanh(torch.nn.functional.conv2d(h, w, b, padding=pad))

    skips = []
    h = x
    for level in range(manifest.depth):
        h = conv_tanh(f"enc{level}.conv0", h)
        h = conv_tanh(f"enc{level}.conv1", h)
        skips.append(h)
        h = torch.nn.functional.avg_pool2d(h, 2)
    h = conv_tanh("bottleneck.conv0", h)
    h = conv_tanh("bottleneck.conv1", h)
    for level in reversed(range(manifest.depth)):
        l = by_name[f"dec{level}.up"]
        h = torch.nn.functional.conv_transpose2d(
            h, torch.from_numpy(l.weight), torch.from_numpy(l.bias), stride=2
        )
        h = torch.cat([h, skips[level]], dim=1)
        h = conv_tanh(f"dec{level}.conv0", h)
        h = conv_tanh(f"dec{level}.conv1", h)
    head = by_name["head"]
    out = torch.nn.functional.conv2d(
        h, torch.from_numpy(head.weight), torch.from_numpy(head.bias)
    )
    return out[0].numpy()


@pytest.mark.parametrize("depth,base,size", [(2, 4, 24), (4, 2, 32)])
def test_forward_matches_torch(depth, base, size, rng):
    config = UnetConfig(in_channels=6, base_width=base, depth=depth)
    manifest = init_manifest(config, seed=17)
    x = rng.standard_normal((6, size, size)).astype(np.float32)
    ours = forward(x, manifest)
    ref = torch_forward(x, manifest)
    assert np.abs(ours - ref).max() <= 1e-4


def test_layer_ops_match_torch(rng):
    from viscid.unet import avg_pool2, conv2d, tconv2_up

    x = rng.standard_normal((3, 10, 10)).astype(np.float32)
    k = rng.standard_normal((5, 3, 3, 3)).astype(np.float32)
    b = rng.standard_normal(5).astype(np.float32)
    ref = torch.nn.functional.conv2d(
        torch.from_numpy(x)[None], torch.from_numpy(k), torch.from_numpy(b), padding=1
    )[0].numpy()
    assert np.abs(conv2d(x, k, b) - ref).max() <= 1e-5

    ref = torch.nn.functional.avg_pool2d(torch.from_numpy(x)[None], 2)[0].numpy()
    assert np.abs(avg_pool2(x) - ref).max() <= 1e-6

    kt = rng.standard_normal((3, 4, 2, 2)).astype(np.float32)
    bt = rng.standard_normal(4).astype(np.float32)
    ref = torch.nn.functional.conv_transpose2d(
        torch.from_numpy(x)[None], torch.from_numpy(kt), torch.from_numpy(bt), stride=2
    )[0].numpy()
    assert np.abs(tconv2_up(x, kt, bt) - ref).max() <= 1e-5
