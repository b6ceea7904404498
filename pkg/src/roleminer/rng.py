"""Seed derivation.

Every random choice in the pipeline flows from one base seed. Sub-streams are
derived as ``SeedSequence(entropy=base_seed, spawn_key=path)`` where ``path``
is a tuple of small non-negative integers naming the consumer, so two
different consumers can never collide and a run is reproducible from the base
seed alone.
"""

from __future__ import annotations

import numpy as np

# Stream ids for spawn paths. Keep stable: recorded seeds depend on them.
STREAM_ELBOW = 0
STREAM_CLUSTER = 1
STREAM_STABILIZE = 2
STREAM_SYNTH = 3


def derive_seed(base_seed: int, *path: int) -> int:
    """Derive a 64-bit integer seed for the sub-stream named by ``path``."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=tuple(path))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0])


def spawn(base_seed: int, *path: int) -> np.random.Generator:
    """Generator for the sub-stream named by ``path``."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=base_seed, spawn_key=tuple(path))
    )
