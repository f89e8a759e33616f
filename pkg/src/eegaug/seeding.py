"""Named, splittable RNG streams.

Every stochastic stage (t draws, noise draws, sampler noise, batch picks,
weight init) pulls from its own independent stream derived from one root
seed, so runs reproduce bit-for-bit regardless of how many draws any single
stage consumes.
"""

from __future__ import annotations

import numpy as np


def named_streams(seed: int, names: tuple[str, ...]) -> dict[str, np.random.Generator]:
    """Split `seed` into one independent Generator per name.

    Streams are keyed positionally off a single SeedSequence spawn, so the
    same (seed, names) pair always yields the same streams.
    """
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}
