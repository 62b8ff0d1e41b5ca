"""
AirFC Simulator - Named Blob Container
======================================

Binary container for checkpoints, channel dumps and transmission parameters.

Layout (all integers little-endian):
  magic      8 bytes  b"AIRFCBLB"
  version    uint32   (currently 1)
  count      uint32   number of entries
  per entry:
    name_len uint16, name (UTF-8)
    kind     uint8    0 = real, 1 = complex
    ndim     uint8, dims uint32 * ndim
    data     row-major float64 little-endian; complex entries as interleaved
             (real, imag) pairs

Purpose: one documented format any language can read for cross-implementation
oracle comparison.
"""

import struct
from typing import Dict

import numpy as np

from shared_modules.errors import AirFCError


MAGIC = b"AIRFCBLB"
VERSION = 1

KIND_REAL = 0
KIND_COMPLEX = 1


class BlobFormatError(AirFCError):
    """Malformed or truncated blob container."""


def encode_blobs(blobs: Dict[str, np.ndarray]) -> bytes:
    """Serialize named arrays to the container byte layout."""
    parts = [MAGIC, struct.pack("<II", VERSION, len(blobs))]
    for name, arr in blobs.items():
        arr = np.asarray(arr)
        name_b = name.encode("utf-8")
        if np.iscomplexobj(arr):
            kind = KIND_COMPLEX
            data = np.ascontiguousarray(arr, dtype="<c16").tobytes()
        else:
            kind = KIND_REAL
            data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        parts.append(struct.pack("<H", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<BB", kind, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(data)
    return b"".join(parts)


def decode_blobs(raw: bytes) -> Dict[str, np.ndarray]:
    """Parse the container byte layout back into named arrays."""
    if raw[:8] != MAGIC:
        raise BlobFormatError(f"Bad magic {raw[:8]!r}; expected {MAGIC!r}")
    pos = 8

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(raw):
            raise BlobFormatError("Truncated blob container")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise BlobFormatError(f"Unsupported container version {version}")

    out: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        kind, ndim = struct.unpack("<BB", take(2))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        n_items = int(np.prod(shape)) if ndim else 1
        if kind == KIND_COMPLEX:
            arr = np.frombuffer(take(16 * n_items), dtype="<c16")
        elif kind == KIND_REAL:
            arr = np.frombuffer(take(8 * n_items), dtype="<f8")
        else:
            raise BlobFormatError(f"Unknown entry kind {kind} for {name!r}")
        out[name] = arr.reshape(shape).astype(arr.dtype.newbyteorder("="))
    return out


def write_blobs(path: str, blobs: Dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(encode_blobs(blobs))


def read_blobs(path: str) -> Dict[str, np.ndarray]:
    with open(path, "rb") as f:
        return decode_blobs(f.read())
