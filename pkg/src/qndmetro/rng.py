"""Counter-based random streams.

Every stochastic routine takes a ``numpy.random.Generator``. Ensembles derive one
stream per member from ``(seed, index)`` so results never depend on scheduling
or worker count.

Algorithm: Philox4x64-10 (Salmon et al., "Parallel random numbers: as easy as
1, 2, 3", SC11), as shipped by ``numpy.random.Philox``. The 128-bit key is
``(index, seed)`` as two 64-bit words, i.e. ``key = index | (seed << 64)``, and
the counter starts at zero. Test vectors live in ``tests/test_rng.py`` and are
checked against an independent pure-Python Philox implementation.
"""

import numpy as np

MASK64 = (1 << 64) - 1


def philox_key(seed, index=0):
    seed = int(seed)
    index = int(index)
    if not (0 <= seed <= MASK64 and 0 <= index <= MASK64):
        raise ValueError("seed and index must be unsigned 64-bit integers")
    return index | (seed << 64)


def make_rng(seed, index=0):
    """Return the generator for ensemble member ``index`` under master ``seed``."""
    return np.random.Generator(np.random.Philox(key=philox_key(seed, index)))


def spawn(seed, count, start=0):
    return [make_rng(seed, i) for i in range(start, start + count)]
