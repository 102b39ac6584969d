"""Deterministic randomness: one root seed, labeled substreams.

Every random decision in the toolkit draws from a generator obtained via
``rng_for(root, *tags)``. The tags name the purpose ("shuffle", "attack",
epoch index, ...), so partial reruns of a pipeline consume the same streams
as a full run.
"""

from __future__ import annotations

import os
import zlib

import numpy as np


def subseed(root: int, *tags) -> np.random.SeedSequence:
    """Derive a named SeedSequence from a root seed and a tag path."""
    entropy = [int(root) & 0xFFFFFFFFFFFFFFFF]
    for tag in tags:
        if isinstance(tag, (int, np.integer)):
            entropy.append(int(tag) & 0xFFFFFFFF)
        else:
            entropy.append(zlib.crc32(str(tag).encode("utf-8")))
    return np.random.SeedSequence(entropy)


def rng_for(root: int, *tags) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(subseed(root, *tags)))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an integer seed, or None (seed 0)."""
    if rng is None:
        return rng_for(0)
    if isinstance(rng, np.random.Generator):
        return rng
    return rng_for(int(rng))


def thread_count() -> int:
    """Worker cap for batch-parallel evaluation, CVAK_THREADS overrides."""
    env = os.environ.get("CVAK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)
