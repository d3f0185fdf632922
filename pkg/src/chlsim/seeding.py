"""Deterministic random streams.

A run seed (int or SeedSequence) owns two child streams: particle positions
and Poisson arrival times.  Anything that needs only positions draws from the
same child, so a marked-configuration run and a full process run with the same
seed see the same particles.
"""
from __future__ import annotations

import numpy as np

POSITIONS = 0
TIMES = 1


def as_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def stream(seed, which: int) -> np.random.Generator:
    ss = as_sequence(seed)
    child = np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (which,),
                                   pool_size=ss.pool_size)
    return np.random.default_rng(child)


def replicate_seed(master: int, index: int) -> int:
    """64-bit seed of replicate ``index``; a pure function of (master, index)."""
    ss = np.random.SeedSequence(master, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])
