"""Binary weights container.

Layout (all integers little-endian u32): magic ``MBWT``, format version,
tensor count, then per tensor: name length + UTF-8 name, rank, dims, and
the raw 32-bit little-endian float data.  Values round-trip bit-exactly
at float32 precision.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"MBWT"
VERSION = 1


class WeightsFormatError(ValueError):
    """Raised for corrupt or incompatible weights files."""


def save_weights(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, value in tensors.items():
        encoded = name.encode("utf-8")
        value = np.asarray(value, dtype="<f4")  # not ascontiguousarray: it promotes 0-d to 1-d
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", value.ndim))
        parts.append(struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(value.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_weights(path: str | Path) -> "OrderedDict[str, np.ndarray]":
    raw = Path(path).read_bytes()

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(raw):
            raise WeightsFormatError(f"{path}: truncated while reading {what}")
        piece = raw[pos : pos + n]
        pos += n
        return piece

    pos = 0
    if take(4, "magic") != MAGIC:
        raise WeightsFormatError(f"{path}: bad magic, not a weights container")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise WeightsFormatError(f"{path}: unsupported format version {version}")
    tensors: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(4 * size, f"tensor {name!r}"), dtype="<f4")
        tensors[name] = data.reshape(dims).copy()
    return tensors
