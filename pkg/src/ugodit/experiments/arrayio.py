"""Binary on-disk array container.

Every array the package writes (including checkpoint payloads) uses one
little-endian layout:

    bytes 0..7   magic ``UGDARRAY``
    u32          format version (currently 1)
    u32          dtype tag (1 = float32)
    u32          rank
    u64 * rank   dims
    raw float32 data, C order

The format is intentionally minimal: portable float32, shape-prefixed,
no compression.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointCorruptionError, CheckpointFormatError

ARRAY_MAGIC = b"UGDARRAY"
ARRAY_VERSION = 1
_DTYPE_FLOAT32 = 1


def write_array(fh, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    fh.write(ARRAY_MAGIC)
    fh.write(struct.pack("<III", ARRAY_VERSION, _DTYPE_FLOAT32, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.tobytes())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointFormatError(f"truncated array: wanted {n} bytes, got {len(data)}")
    return data


def read_array(fh) -> np.ndarray:
    magic = _read_exact(fh, len(ARRAY_MAGIC))
    if magic != ARRAY_MAGIC:
        raise CheckpointFormatError(f"bad array magic {magic!r}")
    version, dtype_tag, rank = struct.unpack("<III", _read_exact(fh, 12))
    if version > ARRAY_VERSION:
        raise CheckpointFormatError(f"array format version {version} is newer than reader")
    if dtype_tag != _DTYPE_FLOAT32:
        raise CheckpointFormatError(f"unsupported dtype tag {dtype_tag}")
    dims = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank))
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4")
    return data.reshape(dims).copy()


def save_array(path, array: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_array(fh, array)


def load_array(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise CheckpointFormatError(f"no array file at {path}")
    with open(path, "rb") as fh:
        arr = read_array(fh)
    if not np.isfinite(arr).all():
        raise CheckpointCorruptionError(f"array at {path} contains non-finite values")
    return arr
