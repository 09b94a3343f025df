"""Deterministic random-stream derivation.

Every stochastic task derives its generator from (root seed, label path)
through ``numpy``'s SeedSequence spawn keys, so results do not depend on
execution order or worker count.
"""
from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "lineage"]


def _key_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream key parts must be nonnegative, got {part}")
        return int(part)
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"stream key part must be int or str, got {type(part)!r}")


def substream(root_seed: int, *key) -> np.random.Generator:
    """Generator for the substream addressed by ``key`` under ``root_seed``."""
    spawn_key = tuple(_key_part(p) for p in key)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(root_seed, spawn_key=spawn_key)))


def lineage(root_seed: int, *key) -> str:
    """Human-readable address of a substream, stored with every estimate."""
    return f"seed={root_seed}/" + "/".join(str(p) for p in key)
