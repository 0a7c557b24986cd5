"""Deterministic seed derivation.

All randomness in the package flows from one master seed. Sub-seeds for
data synthesis, masks, noise, parameter init and per-run reconstructions
are derived by hashing the master seed together with a label path, so
individual streams are independent but fully reproducible.
"""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *labels: object) -> int:
    """Derive a 63-bit sub-seed from ``master`` and a label path.

    The same (master, labels) pair always maps to the same value;
    distinct label paths give statistically independent streams.
    """
    key = "/".join([str(int(master))] + [str(part) for part in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF
