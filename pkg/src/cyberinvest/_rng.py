"""Seeding helpers: one root seed fans out into named, counter-based substreams.

Philox is counter-based, so chunked Monte Carlo batches reproduce bit-for-bit
from one seed regardless of how many workers process the chunks.
"""

import zlib

import numpy as np

# Paths are simulated in fixed-size chunks so that results do not depend on
# the worker count.
CHUNK_PATHS = 4096


def _tag(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def substream(seed: int, label: str) -> np.random.Generator:
    """Generator for the named substream of a root seed."""
    ss = np.random.SeedSequence(entropy=[int(seed), _tag(label)])
    return np.random.Generator(np.random.Philox(ss))


def stream_children(seed: int, label: str, n: int) -> list:
    """n independent child SeedSequences of the named substream."""
    ss = np.random.SeedSequence(entropy=[int(seed), _tag(label)])
    return ss.spawn(n)


def generator_from(seed_or_ss) -> np.random.Generator:
    """Generator from either an int seed or a SeedSequence."""
    if isinstance(seed_or_ss, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed_or_ss))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed_or_ss))))
