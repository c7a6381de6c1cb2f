"""Reproducible Monte Carlo estimates of decision probability and timing.

Each trial owns a counter-based stream derived from
``(master_seed, trial_index)``, so an outcome depends only on its index.
:func:`run_trial` is the readable reference; :func:`run_trials` advances a
whole block of trials with numpy and produces identical outcomes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional

import numpy as np

from nkgame.dynamics import RoleArrays, can_change_array, is_decision, is_frozen, prob_one_array, step
from nkgame.model import GameConfig, Mode, initial_state, z_value
from nkgame.rng import CounterStream, trial_keys, uniform_array

log = logging.getLogger(__name__)

__all__ = [
    "TrialOutcome",
    "TrialBatch",
    "Estimate",
    "run_trial",
    "run_trials",
    "estimate",
    "wilson_interval",
]

Z99 = NormalDist().inv_cdf(0.995)
DEFAULT_CHUNK = 20_000


@dataclass(frozen=True)
class TrialOutcome:
    decided: bool
    decision_time: Optional[int]
    frozen: bool
    freeze_time: Optional[int]
    truncated: bool
    final_z: int


def run_trial(config: GameConfig, trial_index: int) -> TrialOutcome:
    """Play one game until a decision, a frozen state, or ``max_steps``.

    ``frozen`` means the game stopped at a fixed point short of the
    threshold; it is never set together with ``decided``.
    """
    rng = CounterStream.for_trial(config.master_seed, trial_index)
    pop = config.population
    check_freeze = not pop.has_free_bernoulli
    state = initial_state(pop, rng)
    while True:
        t = state.t
        if is_decision(state, config.k):
            return TrialOutcome(True, t, False, None, False, z_value(state))
        if check_freeze and is_frozen(state, pop):
            return TrialOutcome(False, None, True, t, False, z_value(state))
        if t >= config.max_steps:
            return TrialOutcome(False, None, False, None, True, z_value(state))
        state = step(state, config, rng).new_state


@dataclass
class TrialBatch:
    """Outcomes of a contiguous block of trials, one array entry per trial."""

    trial_indices: np.ndarray
    decided: np.ndarray
    decision_time: np.ndarray  # -1 where undecided
    frozen: np.ndarray
    freeze_time: np.ndarray  # -1 where not frozen
    truncated: np.ndarray
    final_z: np.ndarray

    def __len__(self):
        return len(self.trial_indices)

    def outcome(self, j: int) -> TrialOutcome:
        dt, ft = int(self.decision_time[j]), int(self.freeze_time[j])
        return TrialOutcome(
            bool(self.decided[j]),
            dt if dt >= 0 else None,
            bool(self.frozen[j]),
            ft if ft >= 0 else None,
            bool(self.truncated[j]),
            int(self.final_z[j]),
        )

    @classmethod
    def concat(cls, parts) -> "TrialBatch":
        parts = list(parts)
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in cls.__dataclass_fields__))


def _counter(t: int, slots) -> np.ndarray:
    return (np.uint64(t) << np.uint64(32)) | np.asarray(slots, dtype=np.uint64)


def run_trials(config: GameConfig, start: int, stop: int) -> TrialBatch:
    """Vectorised equivalent of ``[run_trial(config, i) for i in range(start, stop)]``."""
    pop = config.population
    n, k = pop.n, config.k
    ra = RoleArrays.from_population(pop)
    check_freeze = not pop.has_free_bernoulli
    idx = np.arange(start, stop, dtype=np.int64)
    size = len(idx)
    keys = trial_keys(config.master_seed, idx)

    u0 = uniform_array(keys[:, None], _counter(0, np.arange(n))[None, :])
    x = (u0 < ra.init_p[None, :]).astype(np.int8)
    z = x.sum(axis=1, dtype=np.int64)

    decided = np.zeros(size, dtype=bool)
    frozen = np.zeros(size, dtype=bool)
    truncated = np.zeros(size, dtype=bool)
    decision_time = np.full(size, -1, dtype=np.int64)
    freeze_time = np.full(size, -1, dtype=np.int64)

    active = np.arange(size)
    t = 0
    agents = np.arange(n)
    while True:
        xa, za = x[active], z[active]
        hit = za >= k
        decided[active[hit]] = True
        decision_time[active[hit]] = t
        rest = ~hit
        if check_freeze and rest.any():
            ones = za[rest, None] - xa[rest]
            movable = can_change_array(ra.kind[None, :], ra.p[None, :], xa[rest], ones, n)
            stuck = ~movable.any(axis=1)
            sub = np.flatnonzero(rest)[stuck]
            frozen[active[sub]] = True
            freeze_time[active[sub]] = t
            rest[sub] = False
        active = active[rest]
        if active.size == 0:
            break
        if t >= config.max_steps:
            truncated[active] = True
            break
        t += 1
        ka = keys[active]
        if config.mode is Mode.ASYNC:
            sel = np.minimum((uniform_array(ka, _counter(t, 0)) * n).astype(np.int64), n - 1)
            u1 = uniform_array(ka, _counter(t, 1))
            xs = x[active, sel]
            ones = z[active] - xs
            prob = prob_one_array(ra.kind[sel], ra.p[sel], xs, ones, n)
            new = (u1 < prob).astype(np.int8)
            x[active, sel] = new
            z[active] += new - xs
        else:
            u = uniform_array(ka[:, None], _counter(t, agents)[None, :])
            xa = x[active]
            ones = z[active, None] - xa
            prob = prob_one_array(ra.kind[None, :], ra.p[None, :], xa, ones, n)
            new = (u < prob).astype(np.int8)
            x[active] = new
            z[active] = new.sum(axis=1, dtype=np.int64)

    return TrialBatch(idx, decided, decision_time, frozen, freeze_time, truncated, z.copy())


def _run_chunk(args):
    config, start, stop = args
    return run_trials(config, start, stop)


def collect(config: GameConfig, n_trials: int, workers: int = 1,
            chunk: Optional[int] = None) -> TrialBatch:
    """Run trials ``0 .. n_trials - 1`` and return them in trial-index order.

    Outcomes do not depend on ``workers`` or ``chunk``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if chunk is None:
        chunk = DEFAULT_CHUNK
        if workers > 1:
            chunk = max(1000, min(chunk, math.ceil(n_trials / (4 * workers))))
    jobs = [(config, s, min(s + chunk, n_trials)) for s in range(0, n_trials, chunk)]
    if workers <= 1 or len(jobs) == 1:
        parts = [_run_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    return TrialBatch.concat(parts)


def wilson_interval(successes: int, n: int, z: float = Z99) -> tuple:
    if n < 1:
        raise ValueError("need at least one trial")
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n))
    lo = max(0.0, min(p, centre - half))
    hi = min(1.0, max(p, centre + half))
    return lo, hi


@dataclass(frozen=True)
class Estimate:
    n_trials: int
    p_decision_hat: float
    wilson_ci_99: tuple
    mean_decision_time: Optional[float]
    truncation_rate: float
    frozen_rate: float
    mean_freeze_time: Optional[float]

    @classmethod
    def from_batch(cls, batch: TrialBatch) -> "Estimate":
        n = len(batch)
        hits = int(batch.decided.sum())
        n_frozen = int(batch.frozen.sum())
        mdt = float(batch.decision_time[batch.decided].mean()) if hits else None
        mft = float(batch.freeze_time[batch.frozen].mean()) if n_frozen else None
        est = cls(
            n_trials=n,
            p_decision_hat=hits / n,
            wilson_ci_99=wilson_interval(hits, n),
            mean_decision_time=mdt,
            truncation_rate=float(batch.truncated.sum()) / n,
            frozen_rate=n_frozen / n,
            mean_freeze_time=mft,
        )
        if est.truncation_rate > 0:
            log.warning("%.2f%% of trials hit max_steps without deciding or freezing",
                        100 * est.truncation_rate)
        return est


def estimate(config: GameConfig, n_trials: int, workers: int = 1) -> Estimate:
    return Estimate.from_batch(collect(config, n_trials, workers=workers))
