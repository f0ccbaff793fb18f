"""Reproducible, splittable random streams.

Every stochastic operation in the package is a pure function of a
``SeedStream``: the same (root, path) always reproduces the same draws, and
distinct paths give statistically independent substreams. Streams are split
hierarchically, e.g. one child per replication, then one grandchild per
purpose (cohort draws, outcome noise) within a trial.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SeedStream:
    """A named point in a tree of independent random substreams."""

    root: int
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not isinstance(self.root, int):
            raise TypeError("root seed must be an integer")
        if any((not isinstance(i, int)) or i < 0 for i in self.path):
            raise ValueError("stream indices must be non-negative integers")

    def child(self, index: int) -> "SeedStream":
        """Derive the substream at ``index``; distinct indices are independent."""
        if index < 0:
            raise ValueError("stream index must be non-negative")
        return SeedStream(self.root, self.path + (index,))

    def generator(self) -> np.random.Generator:
        """Fresh PCG64 generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(entropy=self.root, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(seq))
