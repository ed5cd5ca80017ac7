"""From-scratch forward pass of the U-shaped CNN viscosity surrogate.

The network is an encoder/decoder with skip connections: each encoder
level applies two 3x3 convolutions with tanh and then 2x2 average pooling;
the bottleneck applies two more; each decoder level upsamples with a 2x2
stride-2 transposed convolution, concatenates the matching encoder
feature map (upsampled first, skip second), and applies two 3x3
convolutions with tanh. A final linear 1x1 convolution maps to the two
velocity-change channels, which must be free to take either sign.

Topology and parameters travel together in a :class:`WeightManifest`, so
any compatible depth/width combination is data, not code. All arithmetic
is float32; convolution is im2col plus one matrix product per layer.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    WeightFormatError,
    WeightShapeChainError,
    WeightTruncatedError,
    WeightVersionError,
)

MAGIC = b"VWNET1"
FORMAT_VERSION = 1

Tensor = np.ndarray  # (channels, height, width), float32


def _as_tensor(x: np.ndarray) -> Tensor:
    t = np.ascontiguousarray(x, dtype=np.float32)
    if t.ndim != 3:
        raise ValueError(f"expected a (C, H, W) tensor, got shape {t.shape}")
    return t


@dataclass
class UnetConfig:
    """Compile-time-free description of the network family."""

    in_channels: int
    base_width: int
    depth: int

    def __post_init__(self):
        if self.in_channels not in (6, 7):
            raise ValueError(f"in_channels must be 6 or 7, got {self.in_channels}")
        if self.depth not in (2, 4):
            raise ValueError(f"depth must be 2 or 4, got {self.depth}")
        if self.base_width < 1:
            raise ValueError("base_width must be positive")

    @property
    def widths(self) -> list[int]:
        """Channel width per encoder level plus the bottleneck."""
        return [self.base_width * (1 << l) for l in range(self.depth + 1)]


@dataclass
class LayerSpec:
    """One parameterized layer: a padded conv or a stride-2 transposed conv.

    ``weight`` is ``(c_out, c_in, kh, kw)`` for convs and
    ``(c_in, c_out, kh, kw)`` for transposed convs.
    """

    name: str
    kind: str  # "conv" | "tconv"
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class WeightManifest:
    """Self-describing archive of one trained network."""

    depth: int
    in_channels: int
    widths: list[int]
    seed: int
    layers: list[LayerSpec] = field(default_factory=list)
    version: int = FORMAT_VERSION


def layer_plan(config: UnetConfig) -> list[tuple[str, str, tuple[int, int, int, int]]]:
    """Canonical layer order with kinds and weight shapes."""
    plan = []
    widths = config.widths
    c_in = config.in_channels
    for level in range(config.depth):
        w = widths[level]
        plan.append((f"enc{level}.conv0", "conv", (w, c_in, 3, 3)))
        plan.append((f"enc{level}.conv1", "conv", (w, w, 3, 3)))
        c_in = w
    w = widths[config.depth]
    plan.append(("bottleneck.conv0", "conv", (w, c_in, 3, 3)))
    plan.append(("bottleneck.conv1", "conv", (w, w, 3, 3)))
    c_in = w
    for level in reversed(range(config.depth)):
        w = widths[level]
        plan.append((f"dec{level}.up", "tconv", (c_in, w, 2, 2)))
        plan.append((f"dec{level}.conv0", "conv", (w, 2 * w, 3, 3)))
        plan.append((f"dec{level}.conv1", "conv", (w, w, 3, 3)))
        c_in = w
    plan.append(("head", "conv", (2, c_in, 1, 1)))
    return plan


def init_manifest(config: UnetConfig, seed: int = 0, zero: bool = False) -> WeightManifest:
    """Manifest with fan-in-uniform (or all-zero) parameters."""
    rng = np.random.default_rng(seed)
    layers = []
    for name, kind, shape in layer_plan(config):
        c_bias = shape[0] if kind == "conv" else shape[1]
        if zero:
            weight = np.zeros(shape, dtype=np.float32)
            bias = np.zeros(c_bias, dtype=np.float32)
        else:
            fan_in = shape[1] * shape[2] * shape[3] if kind == "conv" else shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            weight = rng.uniform(-bound, bound, size=shape).astype(np.float32)
            bias = rng.uniform(-bound, bound, size=c_bias).astype(np.float32)
        layers.append(LayerSpec(name=name, kind=kind, weight=weight, bias=bias))
    return WeightManifest(
        depth=config.depth,
        in_channels=config.in_channels,
        widths=config.widths,
        seed=seed,
        layers=layers,
    )


def validate_manifest(manifest: WeightManifest) -> UnetConfig:
    """Check the layer list chains into the canonical topology."""
    if manifest.depth not in (2, 4):
        raise WeightShapeChainError(f"unsupported pooling depth {manifest.depth}")
    if len(manifest.widths) != manifest.depth + 1:
        raise WeightShapeChainError("widths must list every encoder level plus the bottleneck")
    config = UnetConfig(
        in_channels=manifest.in_channels,
        base_width=manifest.widths[0],
        depth=manifest.depth,
    )
    if manifest.widths != config.widths:
        raise WeightShapeChainError(f"widths {manifest.widths} are not a doubling chain")
    plan = layer_plan(config)
    if len(manifest.layers) != len(plan):
        raise WeightShapeChainError(
            f"expected {len(plan)} layers, manifest has {len(manifest.layers)}"
        )
    for spec, (name, kind, shape) in zip(manifest.layers, plan):
        if spec.name != name or spec.kind != kind:
            raise WeightShapeChainError(f"layer {spec.name!r} does not match expected {name!r}")
        if tuple(spec.weight.shape) != shape:
            raise WeightShapeChainError(
                f"layer {name}: weight shape {spec.weight.shape} != {shape}"
            )
        c_bias = shape[0] if kind == "conv" else shape[1]
        if spec.bias.shape != (c_bias,):
            raise WeightShapeChainError(f"layer {name}: bias shape {spec.bias.shape}")
    head = manifest.layers[-1]
    if head.weight.shape[0] != 2:
        raise WeightShapeChainError("final layer must output exactly 2 channels")
    return config


def save_weights(manifest: WeightManifest, path) -> None:
    """Write the little-endian container: magic, version, JSON header, raw
    float32 tensors in declared order (weight then bias per layer)."""
    validate_manifest(manifest)
    header = {
        "depth": manifest.depth,
        "in_channels": manifest.in_channels,
        "widths": manifest.widths,
        "seed": manifest.seed,
        "layers": [
            {
                "name": l.name,
                "kind": l.kind,
                "weight_shape": list(l.weight.shape),
                "bias_shape": list(l.bias.shape),
            }
            for l in manifest.layers
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", manifest.version))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for l in manifest.layers:
            f.write(np.ascontiguousarray(l.weight, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(l.bias, dtype="<f4").tobytes())


def load_weights(path) -> WeightManifest:
    """Read and validate a weight container; never returns a partial manifest."""
    with open(path, "rb") as f:
        data = f.read()
    buf = io.BytesIO(data)
    magic = buf.read(len(MAGIC))
    if magic != MAGIC:
        raise WeightFormatError(f"bad magic {magic!r}")
    head = buf.read(8)
    if len(head) < 8:
        raise WeightTruncatedError("file ends inside the fixed header")
    version, header_len = struct.unpack("<II", head)
    if version != FORMAT_VERSION:
        raise WeightVersionError(f"unsupported weight format version {version}")
    blob = buf.read(header_len)
    if len(blob) < header_len:
        raise WeightTruncatedError("file ends inside the JSON header")
    try:
        header = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"unreadable header: {exc}") from exc

    layers = []
    for entry in header["layers"]:
        w_shape = tuple(entry["weight_shape"])
        b_shape = tuple(entry["bias_shape"])
        n_bytes = 4 * int(np.prod(w_shape)) + 4 * int(np.prod(b_shape))
        raw = buf.read(n_bytes)
        if len(raw) < n_bytes:
            raise WeightTruncatedError(f"file ends inside tensor data of {entry['name']!r}")
        split = 4 * int(np.prod(w_shape))
        weight = np.frombuffer(raw[:split], dtype="<f4").reshape(w_shape).copy()
        bias = np.frombuffer(raw[split:], dtype="<f4").reshape(b_shape).copy()
        layers.append(LayerSpec(name=entry["name"], kind=entry["kind"], weight=weight, bias=bias))
    manifest = WeightManifest(
        depth=header["depth"],
        in_channels=header["in_channels"],
        widths=list(header["widths"]),
        seed=header.get("seed", 0),
        layers=layers,
        version=version,
    )
    validate_manifest(manifest)
    return manifest


def conv2d(
    x: Tensor, kernel: np.ndarray, bias: np.ndarray, stride: int = 1, padding: str = "same"
) -> Tensor:
    """Direct 2D convolution (no kernel flip), float32.

    ``padding="same"`` zero-pads odd kernels to preserve spatial dims at
    stride 1; ``"valid"`` uses no padding.
    """
    x = _as_tensor(x)
    kernel = np.ascontiguousarray(kernel, dtype=np.float32)
    c_out, c_in, kh, kw = kernel.shape
    if x.shape[0] != c_in:
        raise ValueError(f"input has {x.shape[0]} channels, kernel expects {c_in}")
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError("same-padding requires odd kernel sizes")
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        ph = pw = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    h, w = x.shape[1:]
    xp = np.zeros((c_in, h + 2 * ph, w + 2 * pw), dtype=np.float32)
    xp[:, ph : ph + h, pw : pw + w] = x
    oh = (h + 2 * ph - kh) // stride + 1
    ow = (w + 2 * pw - kw) // stride + 1
    sc, sh, sw = xp.strides
    cols = np.lib.stride_tricks.as_strided(
        xp,
        shape=(c_in, kh, kw, oh, ow),
        strides=(sc, sh, sw, sh * stride, sw * stride),
    ).reshape(c_in * kh * kw, oh * ow)
    out = kernel.reshape(c_out, c_in * kh * kw) @ cols
    out += np.asarray(bias, dtype=np.float32)[:, None]
    return out.reshape(c_out, oh, ow)


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2; spatial dims must be even."""
    x = _as_tensor(x)
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool2 needs even spatial dims, got {h}x{w}")
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def tconv2_up(x: Tensor, kernel: np.ndarray, bias: np.ndarray) -> Tensor:
    """Stride-2 transposed convolution with a 2x2 kernel: doubles H and W.

    Exact adjoint of the stride-2 valid convolution with the same kernel
    array (roles of the two channel axes swapped).
    """
    x = _as_tensor(x)
    kernel = np.ascontiguousarray(kernel, dtype=np.float32)
    c_in, c_out, kh, kw = kernel.shape
    if x.shape[0] != c_in:
        raise ValueError(f"input has {x.shape[0]} channels, kernel expects {c_in}")
    if (kh, kw) != (2, 2):
        raise ValueError("tconv2_up uses 2x2 kernels")
    h, w = x.shape[1:]
    t = np.tensordot(kernel, x, axes=([0], [0]))  # (c_out, 2, 2, h, w)
    out = t.transpose(0, 3, 1, 4, 2).reshape(c_out, 2 * h, 2 * w)
    out += np.asarray(bias, dtype=np.float32)[:, None, None]
    return np.ascontiguousarray(out)


def forward(stack: np.ndarray, manifest: WeightManifest) -> Tensor:
    """Full network forward pass on a padded channel stack.

    Input spatial dims must be divisible by ``2**depth``; the output is a
    float32 ``(2, H, W)`` tensor on the same grid.
    """
    config = validate_manifest(manifest)
    x = _as_tensor(stack)
    if x.shape[0] != config.in_channels:
        raise ValueError(f"stack has {x.shape[0]} channels, network expects {config.in_channels}")
    if x.shape[1] % (1 << config.depth) or x.shape[2] % (1 << config.depth):
        raise ValueError(
            f"spatial dims {x.shape[1:]} not divisible by {1 << config.depth}; pad the stack first"
        )
    by_name = {l.name: l for l in manifest.layers}

    def conv_tanh(name, h):
        l = by_name[name]
        return np.tanh(conv2d(h, l.weight, l.bias))

    skips = []
    h = x
    for level in range(config.depth):
        h = conv_tanh(f"enc{level}.conv0", h)
        h = conv_tanh(f"enc{level}.conv1", h)
        skips.append(h)
        h = avg_pool2(h)
    h = conv_tanh("bottleneck.conv0", h)
    h = conv_tanh("bottleneck.conv1", h)
    for level in reversed(range(config.depth)):
        l = by_name[f"dec{level}.up"]
        h = tconv2_up(h, l.weight, l.bias)
        h = np.concatenate([h, skips[level]], axis=0)
        h = conv_tanh(f"dec{level}.conv0", h)
        h = conv_tanh(f"dec{level}.conv1", h)
    head = by_name["head"]
    return conv2d(h, head.weight, head.bias)
