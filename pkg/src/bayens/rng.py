"""Deterministic random streams.

Every random draw in the package flows through a Philox4x64-10 counter-based
bit generator keyed from ``(seed, stream, trial)`` via numpy's SeedSequence,
so splits, orderings, feature subsets, and synthetic streams all reproduce
exactly from the experiment seed, on any platform.

Stream constants (used as SeedSequence spawn keys):

====================  =====
STREAM_SPLIT          0
STREAM_ORDERING       1
STREAM_POOL           2
STREAM_SYNTHETIC      3
====================  =====
"""

from __future__ import annotations

import numpy as np

STREAM_SPLIT = 0
STREAM_ORDERING = 1
STREAM_POOL = 2
STREAM_SYNTHETIC = 3

_MASK64 = (1 << 64) - 1


def stream_rng(seed: int, stream: int, trial: int = 0) -> np.random.Generator:
    """Generator for one (seed, stream, trial) cell of the experiment design."""
    entropy = int(seed) & _MASK64
    ss = np.random.SeedSequence(entropy=entropy, spawn_key=(int(stream), int(trial)))
    return np.random.Generator(np.random.Philox(ss))
