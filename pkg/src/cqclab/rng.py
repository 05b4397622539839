"""Counter-based random streams keyed by (master_seed, stream index).

Each trajectory draws from its own Philox generator, so results never depend
on how trajectories are scheduled across workers.
"""

from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def stream(master_seed: int, index: int = 0, purpose: int = 0) -> np.random.Generator:
    """Independent generator for one trajectory (or one cell, one block...)."""
    ss = np.random.SeedSequence([int(master_seed) & SEED_MASK, int(index), int(purpose)])
    return np.random.Generator(np.random.Philox(ss))


def streams(master_seed: int, indices, purpose: int = 0) -> list[np.random.Generator]:
    return [stream(master_seed, i, purpose) for i in indices]
