"""Deterministic RNG substreams derived from a single master seed.

Every random decision in a run is drawn from a stream keyed by
(master seed, domain, index), so components can be reordered or run
concurrently without perturbing each other's draws.
"""

import random

import numpy as np

SENSOR_DOMAIN = 0
BUS_DOMAIN = 1
PROBE_DOMAIN = 2

_MASK = (1 << 63) - 1


def derive_seed(seed: int, *key: int) -> int:
    """A stable 128-bit integer for the substream (seed, *key)."""
    ss = np.random.SeedSequence([int(seed) & _MASK, *(int(k) & _MASK for k in key)])
    words = ss.generate_state(4, dtype=np.uint32)
    out = 0
    for w in words:
        out = (out << 32) | int(w)
    return out


def substream(seed: int, *key: int) -> random.Random:
    """Independent stdlib generator for (seed, *key)."""
    return random.Random(derive_seed(seed, *key))
