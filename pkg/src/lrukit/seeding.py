"""Seedable, splittable random number generation.

All randomness in the library flows from a single root seed through
counter-based Philox streams.  Philox is a counter-based generator, so
independent child streams can be split off deterministically (via
``SeedSequence`` spawning) without statistical coupling between them:
the same root seed always yields the same tree of streams regardless of
how much randomness each branch consumes.
"""

from __future__ import annotations

import numpy as np

__all__ = ["make_generator", "split"]


def make_generator(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Build the root generator for a run from an integer seed."""
    if isinstance(seed, np.random.SeedSequence):
        seq = seed
    else:
        seq = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seq))


def split(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split ``n`` independent child generators off ``rng``.

    Splitting advances the parent's spawn key, not its stream, so draws
    made from the parent before/after splitting are unaffected by how the
    children are used.
    """
    if n < 0:
        raise ValueError(f"cannot split a negative number of generators: {n}")
    return rng.spawn(n)
