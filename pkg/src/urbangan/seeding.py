"""Labeled seed derivation.

One user-facing seed fans out into independent per-stage / per-item seeds by
hashing the seed together with a label path, so that any stage can be re-run
on its own and still see the same random stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *labels: object) -> int:
    """64-bit seed from ``seed`` and a label path, stable across runs and platforms."""
    text = ":".join([str(int(seed))] + [str(label) for label in labels])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng(seed: int, *labels: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *labels))
