"""Root-seed splitting.

Every subsystem draws from ``numpy.random.Generator`` objects derived from a
single root seed and a string tag: ``SeedSequence([root, crc32(tag)])``.
CRC32 is used instead of ``hash()`` because the latter is salted per process.
"""

from __future__ import annotations

import zlib

import numpy as np


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def derive_seed(root: int, tag: str) -> int:
    """Integer seed for subsystem ``tag`` under ``root``."""
    ss = np.random.SeedSequence([int(root), tag_key(tag)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def rng_for(root: int, *keys: int | str) -> np.random.Generator:
    entropy = [int(root)] + [tag_key(k) if isinstance(k, str) else int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
