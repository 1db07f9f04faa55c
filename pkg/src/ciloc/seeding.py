"""Seed derivation: every random stream is ``sha256(seed, component names...)`` truncated to 64 bits."""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *names) -> int:
    h = hashlib.sha256(str(int(seed)).encode())
    for name in names:
        h.update(b"/")
        h.update(str(name).encode())
    return int.from_bytes(h.digest()[:8], "little")


def derive_rng(seed: int, *names) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *names))
