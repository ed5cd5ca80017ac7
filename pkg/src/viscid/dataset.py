"""Durable training-corpus container: per-frame channels plus labels.

One ``.vfd`` file per scene: a fixed little-endian preamble followed by
length-prefixed, CRC32-checksummed records that can be appended while a
simulation runs and scanned back in order. Labels are stored on the raw
staggered layout so losses need no decoding conventions. A plain-text
JSON manifest written next to the data file summarizes the corpus.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetChecksumError, DatasetTruncatedError, DatasetVersionError
from .grid import GridDims

MAGIC = b"VFDATA1"
FORMAT_VERSION = 1


@dataclass
class FrameRecord:
    """One training example: inputs before the viscous update, labels after."""

    frame: int
    dims: GridDims
    dt: float
    rho: float
    mu: np.ndarray  # (nx, ny) float32, Pa*s
    stack: np.ndarray  # (C, 2nx+1, 2ny+1) float32
    label_du: np.ndarray  # (nx+1, ny) float32
    label_dv: np.ndarray  # (nx, ny+1) float32

    def __post_init__(self):
        d = self.dims
        if self.mu.shape != d.cell_shape:
            raise ValueError(f"mu shape {self.mu.shape} != {d.cell_shape}")
        if self.stack.shape[1:] != d.sym_shape or self.stack.shape[0] not in (6, 7):
            raise ValueError(f"stack shape {self.stack.shape} is not a channel stack")
        if self.label_du.shape != d.u_shape or self.label_dv.shape != d.v_shape:
            raise ValueError("label shapes do not match the staggered layout")
        for arr in (self.mu, self.stack, self.label_du, self.label_dv):
            if not np.all(np.isfinite(arr)):
                raise ValueError("record contains non-finite values")


@dataclass
class DatasetManifest:
    """Plain-text summary stored beside the data file."""

    version: int
    frames: int
    scene: str
    grid: tuple[int, int]
    dx: float
    dt: float
    rho: float
    mu_values: list[float]
    channels: int


def _f32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _encode_record(record: FrameRecord) -> bytes:
    header = {
        "frame": record.frame,
        "nx": record.dims.nx,
        "ny": record.dims.ny,
        "dx": record.dims.dx,
        "dt": record.dt,
        "rho": record.rho,
        "channels": int(record.stack.shape[0]),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [
        struct.pack("<I", len(blob)),
        blob,
        _f32_bytes(record.mu),
        _f32_bytes(record.stack),
        _f32_bytes(record.label_du),
        _f32_bytes(record.label_dv),
    ]
    return b"".join(parts)


def _decode_record(payload: bytes) -> FrameRecord:
    (hlen,) = struct.unpack_from("<I", payload, 0)
    header = json.loads(payload[4 : 4 + hlen].decode("utf-8"))
    dims = GridDims(header["nx"], header["ny"], header["dx"])
    off = 4 + hlen

    def take(shape):
        nonlocal off
        n = 4 * int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=int(np.prod(shape)), offset=off)
        off += n
        return arr.reshape(shape).copy()

    mu = take(dims.cell_shape)
    stack = take((header["channels"],) + dims.sym_shape)
    label_du = take(dims.u_shape)
    label_dv = take(dims.v_shape)
    return FrameRecord(
        frame=header["frame"],
        dims=dims,
        dt=header["dt"],
        rho=header["rho"],
        mu=mu,
        stack=stack,
        label_du=label_du,
        label_dv=label_dv,
    )


def write_frame(record: FrameRecord, sink) -> int:
    """Append one framed, checksummed record to a binary sink.

    Returns the number of bytes written. The frame is
    ``u32 length | payload | u32 crc32(payload)``.
    """
    payload = _encode_record(record)
    framed = struct.pack("<I", len(payload)) + payload + struct.pack("<I", zlib.crc32(payload))
    sink.write(framed)
    return len(framed)


def read_frame(source) -> FrameRecord | None:
    """Read one record at the current position; ``None`` at end of file."""
    head = source.read(4)
    if len(head) == 0:
        return None
    if len(head) < 4:
        raise DatasetTruncatedError("file ends inside a record length prefix")
    (length,) = struct.unpack("<I", head)
    payload = source.read(length)
    if len(payload) < length:
        raise DatasetTruncatedError("file ends inside a record payload")
    tail = source.read(4)
    if len(tail) < 4:
        raise DatasetTruncatedError("file ends inside a record checksum")
    (crc,) = struct.unpack("<I", tail)
    if crc != zlib.crc32(payload):
        raise DatasetChecksumError("record checksum mismatch")
    return _decode_record(payload)


class DatasetWriter:
    """Single-writer appender; closing writes the manifest JSON."""

    def __init__(self, path, scene_name: str, dims: GridDims, dt: float, rho: float):
        self.path = Path(path)
        self.scene_name = scene_name
        self.dims = dims
        self.dt = dt
        self.rho = rho
        self.frames = 0
        self.channels = None
        self._mu_values: set[float] = set()
        self._f = open(self.path, "wb")
        self._f.write(MAGIC)
        self._f.write(struct.pack("<I", FORMAT_VERSION))

    def write(self, record: FrameRecord) -> int:
        if record.dims != self.dims:
            raise ValueError("record dims do not match the dataset")
        if self.channels is None:
            self.channels = int(record.stack.shape[0])
        elif record.stack.shape[0] != self.channels:
            raise ValueError("channel count changed mid-dataset")
        self._mu_values.update(np.unique(record.mu).astype(float).tolist())
        n = write_frame(record, self._f)
        self.frames += 1
        return n

    def close(self) -> DatasetManifest:
        self._f.close()
        manifest = DatasetManifest(
            version=FORMAT_VERSION,
            frames=self.frames,
            scene=self.scene_name,
            grid=(self.dims.nx, self.dims.ny),
            dx=self.dims.dx,
            dt=self.dt,
            rho=self.rho,
            mu_values=sorted(self._mu_values),
            channels=self.channels or 0,
        )
        manifest_path = self.path.with_suffix(self.path.suffix + ".manifest.json")
        manifest_path.write_text(json.dumps(manifest.__dict__, indent=2), encoding="utf-8")
        return manifest

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def open_dataset(path):
    """Validate the preamble and return a positioned file object."""
    f = open(path, "rb")
    magic = f.read(len(MAGIC))
    if magic != MAGIC:
        f.close()
        raise DatasetVersionError(f"bad dataset magic {magic!r}")
    head = f.read(4)
    if len(head) < 4:
        f.close()
        raise DatasetTruncatedError("file ends inside the preamble")
    (version,) = struct.unpack("<I", head)
    if version != FORMAT_VERSION:
        f.close()
        raise DatasetVersionError(f"unsupported dataset version {version}")
    return f


def read_dataset(path) -> list[FrameRecord]:
    """Scan every record of a closed dataset file, in order."""
    records = []
    with open_dataset(path) as f:
        while True:
            record = read_frame(f)
            if record is None:
                break
            records.append(record)
    return records


def load_manifest(path) -> DatasetManifest:
    p = Path(path)
    manifest_path = p.with_suffix(p.suffix + ".manifest.json")
    payload = json.loads(manifest_path.read_text(encoding="utf-8"))
    payload["grid"] = tuple(payload["grid"])
    return DatasetManifest(**payload)
