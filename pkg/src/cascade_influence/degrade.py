"""Missing-data transforms applied to cascades before testing.

Two regimes: events missing independently at random, and doubly censored
cascades where contiguous blocks are removed from both ends. Neither
transform reorders surviving events or changes their inter-event gaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import DataValidationError
from .hawkes import Cascade
from .seeding import seed_stream


@dataclass(frozen=True)
class DegradeSpec:
    mode: str  # "random" | "doubly_censored"
    rate: float
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("random", "doubly_censored"):
            raise DataValidationError(f"unknown degrade mode {self.mode!r}")
        if not 0.0 <= self.rate < 1.0:
            raise DataValidationError("degrade rate must be in [0, 1)")


def drop_random(cascade: Cascade, rate: float, seed: int = 0) -> Cascade:
    """Keep each event independently with probability 1 - rate.

    Order and horizon are unchanged; only the records are lost, not the
    observation window. Deterministic per seed.
    """
    if not 0.0 <= rate < 1.0:
        raise DataValidationError("drop rate must be in [0, 1)")
    if rate == 0.0:
        return cascade
    rng = seed_stream(seed, 0)
    keep = rng.random(len(cascade)) >= rate
    if not keep.any():
        raise DataValidationError("empty cascade: all events dropped")
    return Cascade(
        times=cascade.times[keep].copy(),
        sources=cascade.sources[keep].copy(),
        horizon=cascade.horizon,
        network_hash=cascade.network_hash,
        seed=cascade.seed,
    )


def censor(cascade: Cascade, rate: float) -> Cascade:
    """Remove ceil(rate*n/2) leading and floor(rate*n/2) trailing events.

    Surviving times are re-offset so the first kept event sits at 0 and
    the horizon is the last kept time: downstream learners assume
    observation starts at zero, and without the shift the compensator
    would integrate over a long empty prefix. No randomness involved.
    """
    if not 0.0 < rate < 1.0:
        raise DataValidationError("censor rate must be in (0, 1)")
    n = len(cascade)
    head = math.ceil(rate * n / 2.0)
    tail = math.floor(rate * n / 2.0)
    survivors = n - head - tail
    if survivors < 10:
        raise DataValidationError(
            f"too few survivors: {survivors} events left after censoring"
        )
    times = cascade.times[head : n - tail].copy()
    offset = times[0]
    times -= offset
    return Cascade(
        times=times,
        sources=cascade.sources[head : n - tail].copy(),
        horizon=float(times[-1]),
        network_hash=cascade.network_hash,
        seed=cascade.seed,
    )


def apply(cascade: Cascade, spec: DegradeSpec) -> Cascade:
    if spec.mode == "random":
        return drop_random(cascade, spec.rate, spec.seed)
    return censor(cascade, spec.rate)
