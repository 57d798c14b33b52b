"""Binary container for named parameter tensors.

Layout: magic "WOLO", u32 version (1), u32 tensor count, then per tensor a
u16 name length, the UTF-8 name, a u8 rank, u32 dims, and the raw
little-endian float64 payload. 64-bit payloads (rather than 32) keep
checkpoint round trips bit-exact for training state, which resume
determinism requires.
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = ["MAGIC", "VERSION", "CheckpointFormatError",
           "write_tensors", "read_tensors"]

MAGIC = b"WOLO"
VERSION = 1


class CheckpointFormatError(ValueError):
    """Raised when a checkpoint file is malformed or the wrong version."""


def write_tensors(path, tensors):
    """Write an ordered {name: array} mapping to ``path``."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise CheckpointFormatError(f"tensor name too long: {name!r}")
            if arr.ndim > 0xFF:
                raise CheckpointFormatError(f"tensor rank too large: {arr.ndim}")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_tensors(path):
    """Read a checkpoint back as an ordered {name: float64 array} dict."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic")
    version, count = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise CheckpointFormatError(
            f"{path}: unsupported version {version} (expected {VERSION})")
    out = {}
    off = 12
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<B", blob, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", blob, off)
            off += 4 * rank
            n = int(np.prod(dims, dtype=np.int64)) if rank else 1
            arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off)
            off += 8 * n
            out[name] = arr.reshape(dims).astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise CheckpointFormatError(f"{path}: truncated ({exc})") from None
    if off != len(blob):
        raise CheckpointFormatError(f"{path}: {len(blob) - off} trailing bytes")
    return out
