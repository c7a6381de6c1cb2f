"""Agents, populations, game configuration and opinion states.

The social graph is always complete: agent ``i`` sees every other agent.
"""

from __future__ import annotations

import enum
from fractions import Fraction
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional

from nkgame.errors import ConfigError
from nkgame.rng import CounterStream

__all__ = [
    "ConfigError",
    "RoleKind",
    "Role",
    "REJECTOR",
    "CONSENTOR",
    "NEUTRALIST",
    "RANDOM_FOLLOWER",
    "MAJORITY_FOLLOWER",
    "MINORITY_FOLLOWER",
    "Population",
    "Mode",
    "GameConfig",
    "OpinionState",
    "initial_state",
    "z_value",
    "w_value",
    "pairwise_disagreements",
    "PopulationSyntaxError",
    "parse_population",
]

ASYNC_DEFAULT_MAX_STEPS = 10**6
SYNC_DEFAULT_MAX_STEPS = 10**4


class RoleKind(enum.Enum):
    REJECTOR = "rejector"
    CONSENTOR = "consentor"
    BERNOULLI = "bernoulli"
    RANDOM = "random"
    MAJORITY = "majority"
    MINORITY = "minority"


FOLLOWER_KINDS = frozenset({RoleKind.RANDOM, RoleKind.MAJORITY, RoleKind.MINORITY})


@dataclass(frozen=True)
class Role:
    """Behavioural class of one agent.

    ``p`` is only meaningful for ``RoleKind.BERNOULLI``; a neutralist is
    ``Role.bernoulli(0.5)``.
    """

    kind: RoleKind
    p: Optional[float] = None

    def __post_init__(self):
        if self.kind is RoleKind.BERNOULLI:
            if self.p is None or not math.isfinite(self.p) or not 0.0 <= self.p <= 1.0:
                raise ConfigError(f"Bernoulli probability must lie in [0, 1], got {self.p!r}")
            object.__setattr__(self, "p", float(self.p))
        elif self.p is not None:
            raise ConfigError(f"{self.kind.value} takes no probability")

    @classmethod
    def bernoulli(cls, p: float) -> "Role":
        return cls(RoleKind.BERNOULLI, p)

    @property
    def is_follower(self) -> bool:
        return self.kind in FOLLOWER_KINDS

    @property
    def pinned(self) -> Optional[int]:
        """The opinion this agent holds at all times, or None if it can vary."""
        if self.kind is RoleKind.REJECTOR:
            return 0
        if self.kind is RoleKind.CONSENTOR:
            return 1
        if self.kind is RoleKind.BERNOULLI and self.p in (0.0, 1.0):
            return int(self.p)
        return None

    @property
    def initial_p(self) -> float:
        """Probability of holding opinion 1 at t = 0."""
        pin = self.pinned
        if pin is not None:
            return float(pin)
        if self.kind is RoleKind.BERNOULLI:
            return self.p
        return 0.5

    @property
    def exact_p(self) -> Optional[Fraction]:
        """Bernoulli parameter as the rational its decimal form denotes (0.3 -> 3/10)."""
        return None if self.p is None else Fraction(repr(float(self.p)))

    def __str__(self):
        if self.kind is RoleKind.BERNOULLI:
            return f"bernoulli({self.p:g})"
        return self.kind.value


REJECTOR = Role(RoleKind.REJECTOR)
CONSENTOR = Role(RoleKind.CONSENTOR)
NEUTRALIST = Role.bernoulli(0.5)
RANDOM_FOLLOWER = Role(RoleKind.RANDOM)
MAJORITY_FOLLOWER = Role(RoleKind.MAJORITY)
MINORITY_FOLLOWER = Role(RoleKind.MINORITY)


@dataclass(frozen=True)
class Population:
    """Ordered multiset of roles. Agent ``i`` has role ``roles[i]``.

    ``n_r`` and ``n_c`` count agents pinned at 0 and at 1 respectively, so a
    ``bernoulli(0)`` agent counts as a rejector and ``bernoulli(1)`` as a
    consentor.
    """

    roles: tuple

    def __post_init__(self):
        roles = tuple(self.roles)
        if not roles:
            raise ConfigError("population must contain at least one agent")
        for r in roles:
            if not isinstance(r, Role):
                raise ConfigError(f"not a Role: {r!r}")
        object.__setattr__(self, "roles", roles)

    @classmethod
    def from_counts(cls, *terms: tuple) -> "Population":
        """``Population.from_counts((2, REJECTOR), (3, RANDOM_FOLLOWER))``"""
        roles = []
        for count, role in terms:
            roles.extend([role] * count)
        return cls(tuple(roles))

    def __len__(self):
        return len(self.roles)

    def __iter__(self):
        return iter(self.roles)

    def __getitem__(self, i):
        return self.roles[i]

    @property
    def n(self) -> int:
        return len(self.roles)

    @property
    def n_r(self) -> int:
        return sum(1 for r in self.roles if r.pinned == 0)

    @property
    def n_c(self) -> int:
        return sum(1 for r in self.roles if r.pinned == 1)

    @property
    def n_b(self) -> int:
        """Bernoulli agents that are not pinned (0 < p < 1)."""
        return sum(1 for r in self.roles if r.kind is RoleKind.BERNOULLI and r.pinned is None)

    def count(self, kind: RoleKind) -> int:
        return sum(1 for r in self.roles if r.kind is kind)

    @property
    def n_followers(self) -> int:
        return sum(1 for r in self.roles if r.is_follower)

    @property
    def n_neutralists(self) -> int:
        return sum(1 for r in self.roles if r == NEUTRALIST)

    def kinds(self) -> set:
        """Role kinds present, with pinned Bernoulli agents folded into rejector/consentor."""
        out = set()
        for r in self.roles:
            pin = r.pinned
            if pin == 0:
                out.add(RoleKind.REJECTOR)
            elif pin == 1:
                out.add(RoleKind.CONSENTOR)
            else:
                out.add(r.kind)
        return out

    @property
    def has_free_bernoulli(self) -> bool:
        return self.n_b > 0

    def __str__(self):
        parts = []
        for role, cnt in _runs(self.roles):
            parts.append(f"{cnt}*{role}")
        return ",".join(parts)


def _runs(roles: Iterable[Role]):
    out = []
    for r in roles:
        if out and out[-1][0] == r:
            out[-1][1] += 1
        else:
            out.append([r, 1])
    return [(r, c) for r, c in out]


class Mode(enum.Enum):
    SYNC = "sync"
    ASYNC = "async"


@dataclass(frozen=True)
class GameConfig:
    population: Population
    k: int
    mode: Mode = Mode.ASYNC
    master_seed: int = 0
    max_steps: Optional[int] = None

    def __post_init__(self):
        if not isinstance(self.population, Population):
            object.__setattr__(self, "population", Population(tuple(self.population)))
        mode = Mode(self.mode) if not isinstance(self.mode, Mode) else self.mode
        object.__setattr__(self, "mode", mode)
        n = self.population.n
        if not 1 <= self.k <= n:
            raise ConfigError(f"threshold k must satisfy 1 <= k <= n = {n}, got {self.k}")
        if n == 1 and self.population.n_followers:
            raise ConfigError("a follower needs at least one neighbour (n >= 2)")
        if self.max_steps is None:
            default = ASYNC_DEFAULT_MAX_STEPS if mode is Mode.ASYNC else SYNC_DEFAULT_MAX_STEPS
            object.__setattr__(self, "max_steps", default)
        elif self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")

    @property
    def n(self) -> int:
        return self.population.n


@dataclass(frozen=True)
class OpinionState:
    opinions: tuple
    t: int = 0

    def __post_init__(self):
        ops = tuple(int(x) for x in self.opinions)
        if any(x not in (0, 1) for x in ops):
            raise ValueError(f"opinions must be 0/1, got {self.opinions!r}")
        if self.t < 0:
            raise ValueError("time index must be nonnegative")
        object.__setattr__(self, "opinions", ops)

    @property
    def n(self) -> int:
        return len(self.opinions)

    def check_roles(self, population: Population) -> None:
        if len(population) != self.n:
            raise ValueError("state length does not match population size")
        for i, (role, x) in enumerate(zip(population, self.opinions)):
            pin = role.pinned
            if pin is not None and x != pin:
                raise ValueError(f"agent {i} ({role}) must hold opinion {pin}")


def initial_state(population: Population, rng: CounterStream) -> OpinionState:
    """Sample the t = 0 state.

    Agent ``i`` compares draw ``(0, i)`` of the stream against its initial
    probability: followers use 1/2, Bernoulli agents their own ``p``.
    """
    ops = tuple(int(rng.uniform(0, i) < role.initial_p) for i, role in enumerate(population))
    return OpinionState(ops, 0)


def z_value(state: OpinionState) -> int:
    return sum(state.opinions)


def w_value(state: OpinionState) -> int:
    z = z_value(state)
    return 2 * z * (state.n - z)


def pairwise_disagreements(state: OpinionState) -> int:
    """Ordered-pair count of disagreeing agents, by direct enumeration."""
    x = state.opinions
    return sum(1 for i in range(len(x)) for j in range(len(x)) if x[i] != x[j])


def role_census(population: Population) -> Counter:
    return Counter(population.roles)


class PopulationSyntaxError(ConfigError):
    """Malformed population string; ``column`` is 1-based."""

    def __init__(self, message: str, text: str, column: int):
        self.text = text
        self.column = column
        super().__init__(f"column {column}: {message}\n  {text}\n  {' ' * (column - 1)}^")


ROLE_NAMES = {
    "rejector": REJECTOR,
    "consentor": CONSENTOR,
    "neutralist": NEUTRALIST,
    "neutral": NEUTRALIST,
    "random": RANDOM_FOLLOWER,
    "majority": MAJORITY_FOLLOWER,
    "minority": MINORITY_FOLLOWER,
}

_TERM = re.compile(
    r"\s*(?:(?P<count>\d+)\s*\*\s*)?(?P<name>[A-Za-z_]+)"
    r"(?:\s*\(\s*(?P<p>[^)]*?)\s*\))?\s*$"
)


def parse_population(text: str) -> Population:
    """Parse ``count*role`` terms separated by commas.

    Roles: rejector, consentor, neutralist, random, majority, minority and
    ``bernoulli(p)``. A bare role means a count of one. Agents are laid out
    in the order written.
    """
    if not text or not text.strip():
        raise PopulationSyntaxError("empty population", text or "", 1)
    roles = []
    offset = 0
    for term in text.split(","):
        col = offset + 1 + (len(term) - len(term.lstrip()))
        offset += len(term) + 1
        m = _TERM.match(term)
        if not m:
            raise PopulationSyntaxError(f"cannot parse term {term.strip()!r}; "
                                        "expected count*role", text, col)
        count = int(m["count"]) if m["count"] is not None else 1
        name = m["name"].lower()
        name_col = col + m.start("name") - (len(term) - len(term.lstrip()))
        if name == "bernoulli":
            if m["p"] is None:
                raise PopulationSyntaxError("bernoulli needs a probability, e.g. bernoulli(0.3)",
                                            text, name_col)
            try:
                p = float(m["p"])
            except ValueError:
                raise PopulationSyntaxError(f"bad probability {m['p']!r}", text, name_col) from None
            if not (math.isfinite(p) and 0.0 <= p <= 1.0):
                raise PopulationSyntaxError(f"probability {p} outside [0, 1]", text, name_col)
            role = Role.bernoulli(p)
        elif name in ROLE_NAMES:
            if m["p"] is not None:
                raise PopulationSyntaxError(f"{name} takes no parameter", text, name_col)
            role = ROLE_NAMES[name]
        else:
            raise PopulationSyntaxError(f"unknown role {m['name']!r}", text, name_col)
        if count < 1:
            raise PopulationSyntaxError("count must be positive", text, col)
        roles.extend([role] * count)
    return Population(tuple(roles))
