from __future__ import annotations

import hashlib
import json

import numpy as np


def derive_seed(master: int, *path: int) -> int:
    """Stable 64-bit child seed for ``path`` under ``master``.

    Independent of call order and of how many other children exist, so work
    units can be evaluated in any order or process.
    """
    if master < 0 or any(p < 0 for p in path):
        raise ValueError("seeds and seed paths must be non-negative")
    if any(p >= 2**32 for p in path):
        raise ValueError("seed path entries must fit in 32 bits")
    # The path goes in the spawn key: entropy alone would ignore trailing zeros.
    state = np.random.SeedSequence(master, spawn_key=path).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def config_hash(obj, length: int = 12) -> str:
    """Short sha256 over the canonical JSON form of *obj*."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:length]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
