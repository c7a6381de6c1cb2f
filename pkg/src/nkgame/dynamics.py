"""One-step update kernels for the (n, k) game on the complete graph.

Followers at an exact neighbour tie (``ones_among_others == (n - 1) / 2``)
keep their current opinion. Synchronous follower dynamics are supported as
an extension; the theory only covers synchronous Bernoulli-type agents.
In asynchronous mode a Bernoulli agent redraws only when it is selected.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from nkgame.errors import ConfigError
from nkgame.model import (
    GameConfig,
    Mode,
    OpinionState,
    Population,
    Role,
    RoleKind,
    z_value,
)
from nkgame.rng import CounterStream

__all__ = [
    "FreezingUndefined",
    "StepRecord",
    "prob_one",
    "update_opinion",
    "step_async",
    "step_sync",
    "step",
    "is_decision",
    "is_frozen",
    "can_change",
    "w_drop_by_pairs",
    "RoleArrays",
    "prob_one_array",
]


class FreezingUndefined(ValueError):
    """Raised when asking whether a population with random Bernoulli agents is frozen."""


@dataclass(frozen=True)
class StepRecord:
    selected_agent: Optional[int]
    changed: bool
    new_state: OpinionState


def _majority_target(self_opinion: int, ones: int, n: int) -> int:
    twice, others = 2 * ones, n - 1
    if twice > others:
        return 1
    if twice < others:
        return 0
    return self_opinion


def prob_one(role: Role, self_opinion: int, ones_among_others: int, n: int) -> Fraction:
    """Exact probability that the agent holds opinion 1 after it updates."""
    if role.is_follower:
        if n < 2:
            raise ConfigError("a follower needs at least one neighbour (n >= 2)")
        if not 0 <= ones_among_others <= n - 1:
            raise ValueError(f"ones_among_others={ones_among_others} outside [0, {n - 1}]")
    kind = role.kind
    if kind is RoleKind.REJECTOR:
        return Fraction(0)
    if kind is RoleKind.CONSENTOR:
        return Fraction(1)
    if kind is RoleKind.BERNOULLI:
        return role.exact_p
    if kind is RoleKind.RANDOM:
        return Fraction(ones_among_others, n - 1)
    target = _majority_target(self_opinion, ones_among_others, n)
    if kind is RoleKind.MINORITY and 2 * ones_among_others != n - 1:
        target = 1 - target
    return Fraction(target)


def update_opinion(role: Role, self_opinion: int, ones_among_others: int, n: int,
                   u: float) -> int:
    """Next opinion of one agent given a uniform draw ``u`` in [0, 1).

    Deterministic roles ignore ``u``; stochastic ones return ``u < P(1)``.
    """
    return int(u < float(prob_one(role, self_opinion, ones_among_others, n)))


def _with(opinions: tuple, i: int, value: int) -> tuple:
    return opinions[:i] + (value,) + opinions[i + 1:]


def w_drop_by_pairs(state: OpinionState, agent: int, new_opinion: int) -> int:
    """Right-hand side of the W recursion for a single-agent update."""
    x = state.opinions
    if x[agent] == new_opinion:
        return 0
    total = 0
    for j, xj in enumerate(x):
        if j != agent:
            total += 1 if x[agent] != xj else -1
    return 2 * total


def step_async(state: OpinionState, config: GameConfig, rng: CounterStream) -> StepRecord:
    """Uniformly select one agent and let it update against the others."""
    pop = config.population
    n = pop.n
    t = state.t + 1
    i = rng.index(t, 0, n)
    xi = state.opinions[i]
    z = z_value(state)
    new = update_opinion(pop[i], xi, z - xi, n, rng.uniform(t, 1))
    if new == xi:
        return StepRecord(i, False, OpinionState(state.opinions, t))
    new_state = OpinionState(_with(state.opinions, i, new), t)
    if __debug__:
        z2 = z + new - xi
        assert 2 * z * (n - z) - 2 * z2 * (n - z2) == w_drop_by_pairs(state, i, new)
    return StepRecord(i, True, new_state)


def step_sync(state: OpinionState, config: GameConfig, rng: CounterStream) -> StepRecord:
    """Every agent updates from the time-t state."""
    pop = config.population
    n = pop.n
    t = state.t + 1
    z = z_value(state)
    new = tuple(
        update_opinion(role, x, z - x, n, rng.uniform(t, i))
        for i, (role, x) in enumerate(zip(pop, state.opinions))
    )
    return StepRecord(None, new != state.opinions, OpinionState(new, t))


def step(state: OpinionState, config: GameConfig, rng: CounterStream) -> StepRecord:
    if config.mode is Mode.ASYNC:
        return step_async(state, config, rng)
    return step_sync(state, config, rng)


def is_decision(state: OpinionState, k: int) -> bool:
    return z_value(state) >= k


def can_change(role: Role, self_opinion: int, ones_among_others: int, n: int) -> bool:
    """Whether the agent has any possible next opinion other than its current one."""
    if role.kind is RoleKind.BERNOULLI and role.pinned is None:
        raise FreezingUndefined(f"{role} redraws forever; freezing is undefined")
    return prob_one(role, self_opinion, ones_among_others, n) != self_opinion


def is_frozen(state: OpinionState, config) -> bool:
    """True iff no agent can ever change opinion from ``state``.

    ``config`` may be a :class:`GameConfig` or a bare :class:`Population`.
    """
    pop = getattr(config, "population", config)
    if pop.has_free_bernoulli:
        raise FreezingUndefined("population contains Bernoulli agents with 0 < p < 1")
    n = pop.n
    z = z_value(state)
    return not any(can_change(role, x, z - x, n) for role, x in zip(pop, state.opinions))


# -- vectorised kernels -------------------------------------------------------

KIND_CODES = {
    RoleKind.REJECTOR: 0,
    RoleKind.CONSENTOR: 1,
    RoleKind.BERNOULLI: 2,
    RoleKind.RANDOM: 3,
    RoleKind.MAJORITY: 4,
    RoleKind.MINORITY: 5,
}


@dataclass(frozen=True)
class RoleArrays:
    """Per-agent role data as arrays, for the vectorised kernels."""

    kind: np.ndarray
    p: np.ndarray
    init_p: np.ndarray

    @classmethod
    def from_population(cls, pop: Population) -> "RoleArrays":
        kind = np.array([KIND_CODES[r.kind] for r in pop], dtype=np.int8)
        p = np.array([r.p if r.kind is RoleKind.BERNOULLI else 0.0 for r in pop])
        init_p = np.array([r.initial_p for r in pop])
        return cls(kind, p, init_p)


def prob_one_array(kind, p, self_opinion, ones, n: int) -> np.ndarray:
    """Vectorised :func:`prob_one` returning float64 probabilities.

    All arguments broadcast against each other.
    """
    kind, p, x, ones = np.broadcast_arrays(kind, p, self_opinion, ones)
    twice, others = 2 * ones.astype(np.int64), n - 1
    majority = np.where(twice > others, 1.0, np.where(twice < others, 0.0, x.astype(np.float64)))
    minority = np.where(twice == others, x.astype(np.float64), 1.0 - majority)
    random = ones / (n - 1) if n > 1 else np.zeros(ones.shape)
    return np.select(
        [kind == 0, kind == 1, kind == 2, kind == 3, kind == 4, kind == 5],
        [0.0, 1.0, p, random, majority, minority],
    )


def can_change_array(kind, p, self_opinion, ones, n: int) -> np.ndarray:
    """Vectorised :func:`can_change`; free Bernoulli agents report True."""
    prob = prob_one_array(kind, p, self_opinion, ones, n)
    free = (kind == 2) & (p > 0.0) & (p < 1.0)
    return free | (prob != self_opinion)
