import numpy as np


STREAM_NAMES = ("init", "sampling", "dropout", "negatives", "noise", "splits", "synthetic")


class RandomStreams:
    """
    One seed split into independent named generators, so a single component
    (e.g. negative sampling) can be replayed without disturbing the others.

    :param seed: Root seed shared by all streams.
    """

    def __init__(self, seed: int):
        if seed is None or int(seed) < 0:
            raise ValueError(f"seed must be a non-negative integer, got {seed}")
        self.seed = int(seed)
        self._generators: dict[str, np.random.Generator] = {}

    def _sequence(self, name: str) -> np.random.SeedSequence:
        if name not in STREAM_NAMES:
            raise ValueError(f"unknown rng stream '{name}', expected one of {STREAM_NAMES}")
        return np.random.SeedSequence(self.seed, spawn_key=(STREAM_NAMES.index(name),))

    def get(self, name: str) -> np.random.Generator:
        if name not in self._generators:
            self._generators[name] = np.random.default_rng(self._sequence(name))
        return self._generators[name]

    def fresh(self, name: str) -> np.random.Generator:
        """A new generator at the start of the named stream, independent of get()."""
        return np.random.default_rng(self._sequence(name))
