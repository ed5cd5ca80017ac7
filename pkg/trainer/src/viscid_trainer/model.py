"""Torch build of the U-shaped network, topology-compatible with the
inference engine's weight manifests."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from viscid.unet import LayerSpec, UnetConfig, WeightManifest, layer_plan, validate_manifest


class UNet(nn.Module):
    """Encoder/decoder with tanh activations, average pooling, stride-2
    transposed-conv upsampling and concatenated skips ([up, skip] order)."""

    def __init__(self, config: UnetConfig):
        super().__init__()
        self.config = config
        self.ops = nn.ModuleDict()
        for name, kind, shape in layer_plan(config):
            key = name.replace(".", "_")
            if kind == "conv":
                co, ci, kh, kw = shape
                self.ops[key] = nn.Conv2d(ci, co, (kh, kw), padding=(kh // 2, kw // 2))
            else:
                ci, co, kh, kw = shape
                self.ops[key] = nn.ConvTranspose2d(ci, co, (kh, kw), stride=2)

    def _layer(self, name: str) -> nn.Module:
        return self.ops[name.replace(".", "_")]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        depth = self.config.depth
        if x.shape[-1] % (1 << depth) or x.shape[-2] % (1 << depth):
            raise ValueError(f"input dims {tuple(x.shape[-2:])} not divisible by {1 << depth}")
        skips = []
        h = x
        for level in range(depth):
            h = torch.tanh(self._layer(f"enc{level}.conv0")(h))
            h = torch.tanh(self._layer(f"enc{level}.conv1")(h))
            skips.append(h)
            h = torch.nn.functional.avg_pool2d(h, 2)
        h = torch.tanh(self._layer("bottleneck.conv0")(h))
        h = torch.tanh(self._layer("bottleneck.conv1")(h))
        for level in reversed(range(depth)):
            h = self._layer(f"dec{level}.up")(h)
            h = torch.cat([h, skips[level]], dim=1)
            h = torch.tanh(self._layer(f"dec{level}.conv0")(h))
            h = torch.tanh(self._layer(f"dec{level}.conv1")(h))
        return self._layer("head")(h)


def load_manifest_into(model: UNet, manifest: WeightManifest) -> None:
    """Copy manifest tensors into the torch module, bitwise."""
    validate_manifest(manifest)
    with torch.no_grad():
        for spec in manifest.layers:
            layer = model._layer(spec.name)
            layer.weight.copy_(torch.from_numpy(spec.weight))
            layer.bias.copy_(torch.from_numpy(spec.bias))


def export_manifest(model: UNet, seed: int) -> WeightManifest:
    """Read the torch parameters back out in canonical layer order."""
    layers = []
    for name, kind, _ in layer_plan(model.config):
        layer = model._layer(name)
        layers.append(
            LayerSpec(
                name=name,
                kind=kind,
                weight=np.ascontiguousarray(layer.weight.detach().numpy(), dtype=np.float32),
                bias=np.ascontiguousarray(layer.bias.detach().numpy(), dtype=np.float32),
            )
        )
    manifest = WeightManifest(
        depth=model.config.depth,
        in_channels=model.config.in_channels,
        widths=model.config.widths,
        seed=seed,
        layers=layers,
    )
    validate_manifest(manifest)
    return manifest
