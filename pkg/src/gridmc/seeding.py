"""Deterministic random stream derivation.

Every task gets its own generator derived from the master seed and a tuple
of small integers naming the task: stream (seed; role, i, j, ...) is
``default_rng(SeedSequence(seed, spawn_key=(role, i, j, ...)))``.  Streams
for distinct keys are independent, and a task's stream never depends on
which other tasks run, so adding sample paths or outer samples leaves the
existing ones untouched.
"""

from __future__ import annotations

import numpy as np

# role codes, first element of every spawn key
GIBBS_PATH = 1      # capacity sample paths: (GIBBS_PATH, path)
OUTER_X = 2         # information-rate outer draws: (OUTER_X, ell)
CHANNEL_NOISE = 3   # channel noise for outer sample ell: (CHANNEL_NOISE, ell)
INNER_LAYER = 4     # tempered inner chains: (INNER_LAYER, ell, layer)
SELF_TEST = 5       # chain-check command


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))


def rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *key))
