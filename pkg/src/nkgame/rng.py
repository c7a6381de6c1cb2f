"""Counter-based random streams.

Every random number in a trial is a pure function of
``(master_seed, trial_index, t, slot)``:

    key     = mix64(mix64(master_seed) + GOLDEN * (trial_index + 1))
    bits    = mix64(key ^ mix64(GOLDEN * (counter + 1)))
    uniform = (bits >> 11) * 2**-53,        counter = (t << 32) | slot

``mix64`` is the SplitMix64 finalizer. Because no draw depends on how many
draws came before it, a trial is reproduced bit for bit whether it runs
alone, inside a vectorised batch, or in another process.

Slot layout: at t = 0 agent ``i`` uses slot ``i`` for its initial opinion.
An asynchronous step ``t >= 1`` uses slot 0 to pick the agent and slot 1 for
that agent's update; a synchronous round uses slot ``i`` for agent ``i``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TWO_M53 = 2.0**-53

_U_GOLDEN = np.uint64(GOLDEN)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_U30, _U27, _U31, _U11 = (np.uint64(s) for s in (30, 27, 31, 11))


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U30)) * _U_M1
        z = (z ^ (z >> _U27)) * _U_M2
    return z ^ (z >> _U31)


def counter(t: int, slot: int) -> int:
    return (t << 32) | slot


def trial_key(master_seed: int, trial_index: int) -> int:
    if trial_index < 0:
        raise ValueError("trial_index must be nonnegative")
    return mix64(mix64(master_seed) + GOLDEN * (trial_index + 1))


def trial_keys(master_seed: int, trial_indices) -> np.ndarray:
    idx = np.asarray(trial_indices, dtype=np.uint64)
    base = np.uint64(mix64(master_seed))
    with np.errstate(over="ignore"):
        mixed = base + _U_GOLDEN * (idx + np.uint64(1))
    return mix64_array(mixed)


def uniform_from(key: int, ctr: int) -> float:
    bits = mix64(key ^ mix64(GOLDEN * (ctr + 1)))
    return (bits >> 11) * _TWO_M53


def uniform_array(keys: np.ndarray, counters) -> np.ndarray:
    """Vectorised :func:`uniform_from`; ``keys`` and ``counters`` broadcast."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        spread = _U_GOLDEN * (c + np.uint64(1))
    bits = mix64_array(keys ^ mix64_array(spread))
    return (bits >> _U11).astype(np.float64) * _TWO_M53


class CounterStream:
    """Deterministic per-trial stream addressed by ``(t, slot)``."""

    __slots__ = ("key",)

    def __init__(self, key: int):
        self.key = key & MASK64

    @classmethod
    def for_trial(cls, master_seed: int, trial_index: int) -> "CounterStream":
        return cls(trial_key(master_seed, trial_index))

    def uniform(self, t: int, slot: int) -> float:
        return uniform_from(self.key, counter(t, slot))

    def index(self, t: int, slot: int, n: int) -> int:
        """Uniform integer in ``range(n)`` from draw ``(t, slot)``."""
        return min(int(self.uniform(t, slot) * n), n - 1)

    def __repr__(self):
        return f"CounterStream(key=0x{self.key:016x})"
