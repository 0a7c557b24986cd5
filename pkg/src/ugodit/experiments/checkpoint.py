"""Encoder checkpoints: trained weights plus provenance.

File layout (little-endian):

    bytes 0..7   magic ``UGODITCK``
    u32          format version (currently 1)
    u64          header length in bytes
    header       UTF-8 JSON: architecture spec, fingerprint, provenance
    u32          number of parameter arrays
    per array:   u32 name length, name bytes, array payload
                 (see :mod:`ugodit.experiments.arrayio`)

Loading verifies the magic, the version, the fingerprint of the embedded
spec, and that every array is finite; a failed check leaves nothing
half-loaded.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import (
    CheckpointCorruptionError,
    CheckpointFormatError,
    CheckpointIntegrityError,
    CheckpointVersionError,
)
from ..network import ArchitectureSpec, Encoder
from .arrayio import read_array, write_array

CHECKPOINT_MAGIC = b"UGODITCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(encoder: Encoder, meta: dict, path) -> None:
    """Write encoder weights with architecture spec and run provenance."""
    header = {
        "spec": encoder.spec.to_dict(),
        "fingerprint": encoder.fingerprint,
        "provenance": dict(meta),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    state = encoder.state_dict()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(struct.pack("<I", len(state)))
        for name, tensor in state.items():
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            write_array(fh, tensor.detach().cpu().numpy())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointFormatError(f"truncated checkpoint: wanted {n} bytes")
    return data


def load_checkpoint(path) -> tuple[Encoder, dict]:
    """Read a checkpoint back into a fresh encoder; returns (encoder, meta)."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointFormatError(f"no checkpoint at {path}")
    with open(path, "rb") as fh:
        magic = _read_exact(fh, len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version > CHECKPOINT_VERSION:
            raise CheckpointVersionError(
                f"checkpoint version {version} is newer than reader version "
                f"{CHECKPOINT_VERSION}"
            )
        (header_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        header = json.loads(_read_exact(fh, header_len).decode("utf-8"))
        spec = ArchitectureSpec.from_dict(header["spec"])
        if spec.fingerprint() != header["fingerprint"]:
            raise CheckpointIntegrityError(
                "stored fingerprint does not match the embedded architecture spec"
            )
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
            name = _read_exact(fh, name_len).decode("utf-8")
            arrays[name] = read_array(fh)

    for name, arr in arrays.items():
        if not np.isfinite(arr).all():
            raise CheckpointCorruptionError(f"array {name!r} contains non-finite values")

    encoder = Encoder(spec)
    expected = set(encoder.state_dict().keys())
    if expected != set(arrays.keys()):
        raise CheckpointIntegrityError(
            f"parameter names do not match the spec: missing "
            f"{sorted(expected - set(arrays))}, unexpected "
            f"{sorted(set(arrays) - expected)}"
        )
    encoder.load_state_dict({k: torch.from_numpy(v) for k, v in arrays.items()})
    return encoder, header["provenance"]
