"""Named, reproducible random sub-streams derived from a master seed."""

from __future__ import annotations

import zlib

import numpy as np


def _key(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"stream key must be non-negative, got {part}")
    return int(part)


def seed_sequence(seed: int, *names: int | str) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(n) for n in names))


def substream(seed: int, *names: int | str) -> np.random.Generator:
    """Return an independent generator for the stream ``names`` under ``seed``.

    Streams with different names never share state, so components may be
    built in any order without perturbing each other.
    """
    return np.random.default_rng(seed_sequence(seed, *names))


def derive_seed(seed: int, *names: int | str) -> int:
    """A 32-bit integer seed derived from ``seed`` and the stream names."""
    return int(seed_sequence(seed, *names).generate_state(1, dtype=np.uint32)[0])
