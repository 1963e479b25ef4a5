"""Seed derivation so results do not depend on execution order."""

import numpy as np


def derive_seed(master, *keys: int) -> np.random.SeedSequence:
    """Child seed for ``(master, *keys)``, e.g. ``derive_seed(s, rep, STREAM, run)``."""
    if isinstance(master, np.random.SeedSequence):
        return np.random.SeedSequence(master.entropy, spawn_key=tuple(master.spawn_key) + tuple(keys))
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# stream ids used by the experiment harness
TRUTH, SAMPLE, MASK, EM_INIT = 0, 1, 2, 3
