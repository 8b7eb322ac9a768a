"""Keyed random streams.

Every stochastic draw in a simulation comes from a generator keyed by
``(seed, purpose, round, client)``.  Streams never share state, so results do
not depend on the order in which clients are processed or on the number of
worker threads.
"""

from __future__ import annotations

import hashlib
from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    DATA = 1
    PROFILE = 2
    SELECT = 3
    TRAIN = 4
    NETWORK = 5
    INIT = 6


def stream(seed: int, purpose: Purpose, round_idx: int = 0, client_id: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, purpose, round, client) key."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, int(purpose), int(round_idx), int(client_id)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def derive_seed(master: int, label: str) -> int:
    """Stable 63-bit child seed for a named sub-run (e.g. a matrix cell)."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "little")])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
