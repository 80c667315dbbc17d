"""
Splittable random streams.

All randomness in a run flows from one integer seed. Each subsystem asks for
its own named stream, so adding a consumer never shifts another one's draws.
"""

import zlib
from typing import Dict

import numpy as np


class RngStreams:
    """Named, independent numpy Generators derived from a single seed"""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: Dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        """
        Return the generator for a named stream, creating it on first use

        Args:
            name: Stream name such as "split", "init" or "sampler"

        Returns:
            A Generator whose sequence depends only on (seed, name)
        """
        if name not in self._streams:
            self._streams[name] = self.fresh(name)
        return self._streams[name]

    def fresh(self, name: str) -> np.random.Generator:
        """A new generator for the stream, restarted from its first draw"""
        key = zlib.crc32(name.encode("utf-8"))
        seq = np.random.SeedSequence(self.seed, spawn_key=(key,))
        return np.random.default_rng(seq)
