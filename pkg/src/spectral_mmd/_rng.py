"""Seed derivation and counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by a
128-bit value derived from the user's master seed with
:class:`numpy.random.SeedSequence`. A stream is named by a tuple of small
integers (its purpose and, where relevant, an index), so draws never depend on
call order or on how work is scheduled across threads.
"""

from __future__ import annotations

import numpy as np

# stream purposes
SPLIT = 0
PERMUTATION = 1
FREQUENCIES = 2
DATA_X = 3
DATA_Y = 4
TRIAL = 5
REDRAW = 6


def derive_seed(seed: int, *path: int) -> int:
    """A 64-bit seed for the sub-stream ``path`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed) % 2**128, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def philox(seed: int, *path: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) % 2**128, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
