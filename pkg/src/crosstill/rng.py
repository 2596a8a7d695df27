"""Deterministic random streams.

Every random draw in the package comes from a PCG64 generator keyed by a
64-bit base seed plus a tuple of string labels, so any component can derive
an independent stream without coordinating counters. Identical (seed, labels)
yields an identical sequence on every platform.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_key(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int, *labels: str | int) -> np.random.Generator:
    """Generator for the sub-stream identified by (seed, labels)."""
    spawn_key = tuple(
        _label_key(lab) if isinstance(lab, str) else int(lab) for lab in labels
    )
    seq = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(seq))
