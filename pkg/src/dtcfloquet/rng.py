"""Per-trajectory random streams.

Every trajectory draws from its own Philox4x64 generator (counter based)
whose key is derived by ``numpy.random.SeedSequence`` from the master seed
and the spawn key ``(cell, trajectory)``.  The derivation is independent of
worker count and scheduling, so any cell can be recomputed in isolation and
results reproduce across machines with the same numpy bit generators.
"""

import numpy as np


def stream(seed: int, cell: int, traj: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(cell), int(traj)))
    return np.random.Generator(np.random.Philox(ss))
