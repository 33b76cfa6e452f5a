"""Deterministic random substreams.

Every stochastic stage derives its generator from (master seed, domain
tag, frame index) through ``numpy.random.SeedSequence``, so frames can be
produced in any order — or in parallel — and still yield bit-identical
stacks for a given seed.
"""

from __future__ import annotations

import numpy as np

# Domain tags keep the dark, twin-beam and readout streams disjoint even
# when they share a master seed.
DOMAIN_SOURCE = 1
DOMAIN_DARK = 2
DOMAIN_BEAM1 = 3
DOMAIN_BEAM2 = 4

__all__ = ["DOMAIN_SOURCE", "DOMAIN_DARK", "DOMAIN_BEAM1", "DOMAIN_BEAM2", "substream"]


def substream(seed: int, domain: int, index: int = 0) -> np.random.Generator:
    """Generator for one (seed, domain, frame-index) cell of the stream grid."""
    ss = np.random.SeedSequence(entropy=(int(seed), int(domain), int(index)))
    return np.random.Generator(np.random.PCG64(ss))
