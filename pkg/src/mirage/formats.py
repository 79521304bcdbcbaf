"""Binary container formats for checkpoints and datasets.

Checkpoint ("MIRG"): magic, version u16, tensor count u32, then per tensor
name length u16 + UTF-8 name, dtype code u8 (0 = float32), rank u8, dims
u32 each, raw little-endian data; a trailing CRC32 of all preceding bytes.

Dataset ("MIRD"): magic, version u16, sample count u32, H u16, W u16,
C u8, then per sample label u8, generator id u8, and row-major pixels as
u16 fixed point (value / 65535). Loaders validate structure strictly.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .synthdata import FAMILIES, ImageSample, generator_id

__all__ = [
    "CHECKPOINT_MAGIC",
    "CorruptArtifactError",
    "DATASET_MAGIC",
    "FORMAT_VERSION",
    "load_checkpoint",
    "load_dataset",
    "save_checkpoint",
    "save_dataset",
]

CHECKPOINT_MAGIC = b"MIRG"
DATASET_MAGIC = b"MIRD"
FORMAT_VERSION = 1

_DTYPE_F32 = 0


class CorruptArtifactError(Exception):
    pass


def _fail(path, reason) -> "CorruptArtifactError":
    return CorruptArtifactError(f"{path}: {reason}")


def save_checkpoint(path, tensors: dict) -> None:
    """Write named float32 arrays in insertion order."""
    body = bytearray()
    body += CHECKPOINT_MAGIC
    body += struct.pack("<H", FORMAT_VERSION)
    body += struct.pack("<I", len(tensors))
    seen = set()
    for name, arr in tensors.items():
        if name in seen:
            raise ValueError(f"duplicate tensor name {name!r}")
        seen.add(name)
        arr = np.asarray(arr)
        if arr.dtype != np.float32:
            raise ValueError(f"checkpoint tensors must be float32, got {arr.dtype} for {name!r}")
        encoded = name.encode("utf-8")
        body += struct.pack("<H", len(encoded))
        body += encoded
        body += struct.pack("<BB", _DTYPE_F32, arr.ndim)
        for dim in arr.shape:
            body += struct.pack("<I", dim)
        body += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    with open(path, "wb") as fh:
        fh.write(bytes(body))


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 14:
        raise _fail(path, "truncated header")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise _fail(path, f"bad magic {raw[:4]!r}")
    body, (stored_crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != stored_crc:
        raise _fail(path, "CRC mismatch")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != FORMAT_VERSION:
        raise _fail(path, f"unsupported version {version}")
    (count,) = struct.unpack_from("<I", raw, 6)
    offset = 10
    tensors: dict = {}
    for _ in range(count):
        if offset + 2 > len(body):
            raise _fail(path, "truncated tensor record")
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset : offset + name_len].decode("utf-8")
        offset += name_len
        dtype_code, rank = struct.unpack_from("<BB", raw, offset)
        offset += 2
        if dtype_code != _DTYPE_F32:
            raise _fail(path, f"unknown dtype code {dtype_code}")
        dims = struct.unpack_from(f"<{rank}I", raw, offset) if rank else ()
        offset += 4 * rank
        size = int(np.prod(dims)) if dims else 1
        end = offset + 4 * size
        if end > len(body):
            raise _fail(path, "truncated tensor data")
        arr = np.frombuffer(raw[offset:end], dtype="<f4").reshape(dims).astype(np.float32)
        offset = end
        if name in tensors:
            raise _fail(path, f"duplicate tensor name {name!r}")
        tensors[name] = arr
    if offset != len(body):
        raise _fail(path, f"{len(body) - offset} trailing bytes")
    return tensors


def save_dataset(path, samples: list) -> None:
    if not samples:
        raise ValueError("dataset must contain at least one sample")
    h, w, c = samples[0].pixels.shape
    body = bytearray()
    body += DATASET_MAGIC
    body += struct.pack("<H", FORMAT_VERSION)
    body += struct.pack("<IHHB", len(samples), h, w, c)
    for s in samples:
        if s.pixels.shape != (h, w, c):
            raise ValueError(f"inconsistent sample shape {s.pixels.shape} vs {(h, w, c)}")
        body += struct.pack("<BB", s.label, generator_id(s.generator))
        quantized = np.clip(np.round(s.pixels.astype(np.float64) * 65535.0), 0, 65535)
        body += quantized.astype("<u2").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(body))


def load_dataset(path) -> list:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 15:
        raise _fail(path, "truncated header")
    if raw[:4] != DATASET_MAGIC:
        raise _fail(path, f"bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != FORMAT_VERSION:
        raise _fail(path, f"unsupported version {version}")
    count, h, w, c = struct.unpack_from("<IHHB", raw, 6)
    offset = 15
    sample_bytes = 2 + 2 * h * w * c
    expected = offset + count * sample_bytes
    if len(raw) != expected:
        raise _fail(path, f"length {len(raw)} != expected {expected}")
    samples = []
    for idx in range(count):
        label, gen_id = struct.unpack_from("<BB", raw, offset)
        offset += 2
        if label not in (0, 1):
            raise _fail(path, f"sample {idx}: invalid label {label}")
        if gen_id >= len(FAMILIES):
            raise _fail(path, f"sample {idx}: invalid generator id {gen_id}")
        pixels = np.frombuffer(raw, dtype="<u2", count=h * w * c, offset=offset)
        offset += 2 * h * w * c
        decoded = (pixels.astype(np.float32) / 65535.0).reshape(h, w, c)
        samples.append(ImageSample(decoded, label, FAMILIES[gen_id], seed=idx))
    return samples
