"""Seedable random number streams.

Everything random in the package flows through PCG64 so that builds are
reproducible bit-for-bit across platforms.  Derived streams (one per tree,
one for the featurizer projection) come from ``SeedSequence`` spawn keys,
which keeps parallel tree construction independent of scheduling order.
The generator choice is part of the on-disk format contract; see
docs/FORMATS.md.
"""

from __future__ import annotations

import numpy as np


def master_rng(seed: int) -> np.random.Generator:
    """Generator for the given 64-bit seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derived_rng(seed: int, *spawn_key: int) -> np.random.Generator:
    """Independent stream derived from ``seed`` and a fixed spawn key.

    Tree ``t`` of a forest uses ``derived_rng(seed, t)``; the same key always
    yields the same stream regardless of which other streams were drawn.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(ss))
