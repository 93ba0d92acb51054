"""Deterministic, platform-independent random number streams.

All randomness in the package flows through Philox-4x64-10 counter-based
generators keyed by (master_seed, stream_id). The algorithm is fully
specified by its constants, so a given (seed, stream) pair replays the
same sequence on any platform. Distinct stream ids give statistically
independent streams.

Seed expansion for experiment sweeps uses splitmix64: the per-cell seed
is obtained by mixing the master seed with the condition index and the
cascade index (see ``cell_seed``), so any subset of cells can be re-run
in isolation and reproduce the full sweep's rows.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15  # splitmix64 increment


def splitmix64(x: int) -> int:
    """One splitmix64 mixing step (public-domain constants)."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def seed_stream(master_seed: int, stream_id: int = 0) -> np.random.Generator:
    """Generator for stream ``stream_id`` of ``master_seed``.

    Same (seed, id) -> identical sequence; distinct ids -> independent
    streams.
    """
    key = np.array([master_seed & _MASK64, stream_id & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def cell_seed(master_seed: int, condition_index: int, cascade_index: int) -> int:
    """Derived 64-bit seed for one (condition, cascade) cell of a sweep.

    Scheme: s = splitmix64(master + splitmix64(condition_index + 1));
    cell = splitmix64(s + cascade_index + 1). Documented so external
    tooling can reproduce individual cells.
    """
    s = splitmix64((master_seed + splitmix64(condition_index + 1)) & _MASK64)
    return splitmix64((s + cascade_index + 1) & _MASK64)


class SeedStream:
    """A (master seed, stream id) pair that hands out derived generators.

    Thin convenience wrapper so call sites can pass a single object and
    split off child streams for sub-purposes without coordinating ids
    by hand.
    """

    def __init__(self, master_seed: int, stream_id: int = 0):
        self.master_seed = int(master_seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64

    def generator(self) -> np.random.Generator:
        return seed_stream(self.master_seed, self.stream_id)

    def child(self, offset: int) -> "SeedStream":
        return SeedStream(self.master_seed, splitmix64(self.stream_id + offset))

    def __repr__(self):
        return f"SeedStream(master_seed={self.master_seed}, stream_id={self.stream_id})"
