"""Exact analysis of the (n, k) game.

Agents sharing a role are exchangeable on the complete graph, so the
asynchronous chain is lumped onto per-class counts of opinion-1 holders.
Pinned agents (rejectors, consentors, Bernoulli(0) and Bernoulli(1)) carry
no coordinate. Decision states (Z >= k) are absorbing.

Hitting probabilities and expected absorption times are solved in floating
point with a residual check; :func:`absorption` with ``exact=True`` reruns
the same systems over ``Fraction`` for small chains.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from nkgame.dynamics import prob_one, prob_one_array, RoleArrays
from nkgame.errors import (
    DegenerateVariance,
    PreconditionError,
    SingularChain,
    StateSpaceTooLarge,
    UnsupportedMode,
)
from nkgame.model import GameConfig, Mode, Population, Role, RoleKind

DEFAULT_STATE_CAP = 10**6
RESIDUAL_TOL = 1e-10

TRANSIENT = "transient"
DECISION = "absorbing-decision"
NO_DECISION = "absorbing-no-decision"
RECURRENT = "recurrent"


# -- lumped state space -------------------------------------------------------

class Lumping:
    """Non-pinned role classes of a population and the mixed-radix state index."""

    def __init__(self, population: Population):
        self.population = population
        self.n = population.n
        self.n_c = population.n_c
        self.n_r = population.n_r
        classes: list = []
        sizes: list = []
        for role in population:
            if role.pinned is not None:
                continue
            if role in classes:
                sizes[classes.index(role)] += 1
            else:
                classes.append(role)
                sizes.append(1)
        self.classes = tuple(classes)
        self.sizes = tuple(sizes)
        strides, s = [], 1
        for m in self.sizes:
            strides.append(s)
            s *= m + 1
        self.strides = tuple(strides)
        self.n_states = s
        self._law: dict = {}

    def states(self):
        # first class varies fastest, matching the strides
        for combo in product(*(range(m + 1) for m in reversed(self.sizes))):
            yield tuple(reversed(combo))

    def index(self, counts: Sequence[int]) -> int:
        return sum(z * s for z, s in zip(counts, self.strides))

    def z(self, counts: Sequence[int]) -> int:
        return self.n_c + sum(counts)

    def class_of(self, role: Role) -> Optional[int]:
        return self.classes.index(role) if role in self.classes else None

    def law(self, c: int, self_opinion: int, ones: int) -> Fraction:
        key = (c, self_opinion, ones)
        if key not in self._law:
            self._law[key] = prob_one(self.classes[c], self_opinion, ones, self.n)
        return self._law[key]

    def moves(self, counts: Sequence[int]):
        """Asynchronous one-step moves out of ``counts`` ignoring the threshold.

        Yields ``(class, delta, probability)`` with delta = +1 or -1.
        """
        n = self.n
        z = self.z(counts)
        for c, (m, zc) in enumerate(zip(self.sizes, counts)):
            if m - zc:
                up = Fraction(m - zc, n) * self.law(c, 0, z)
                if up:
                    yield c, 1, up
            if zc:
                down = Fraction(zc, n) * (1 - self.law(c, 1, z - 1))
                if down:
                    yield c, -1, down

    def initial_distribution(self) -> list:
        """Exact t = 0 law: independent Binomial(size, initial p) per class."""
        per_class = []
        for role, m in zip(self.classes, self.sizes):
            p = role.exact_p if role.kind is RoleKind.BERNOULLI else Fraction(role.initial_p)
            per_class.append([math.comb(m, z) * p**z * (1 - p) ** (m - z) for z in range(m + 1)])
        out = []
        for counts in self.states():
            w = Fraction(1)
            for c, zc in enumerate(counts):
                w *= per_class[c][zc]
            out.append(w)
        return out

    def labels(self) -> list:
        return [str(r) for r in self.classes]


# -- generic linear algebra ---------------------------------------------------

def _reaches(adj: sp.csr_matrix, target: np.ndarray) -> np.ndarray:
    """States with a path (length >= 0) into ``target``; ``adj[i, j] > 0`` is an edge i -> j."""
    reach = target.copy()
    while True:
        nxt = reach | (adj @ reach.astype(np.float64) > 0)
        if (nxt == reach).all():
            return reach
        reach = nxt


def _solve(P: sp.csr_matrix, rows: np.ndarray, rhs: np.ndarray):
    """Solve (I - P[rows, rows]) x = rhs; returns x and the max-norm residual."""
    if rows.size == 0:
        return np.zeros(0), 0.0
    Q = P[rows][:, rows]
    A = (sp.identity(rows.size, format="csc") - Q.tocsc()).tocsc()
    x = np.atleast_1d(spsolve(A, rhs))
    if not np.all(np.isfinite(x)):
        raise SingularChain(f"transient system of size {rows.size} is singular")
    residual = float(np.max(np.abs(A @ x - rhs))) if rows.size else 0.0
    if residual > RESIDUAL_TOL:
        raise SingularChain(f"residual {residual:.3e} exceeds {RESIDUAL_TOL:g}")
    return x, residual


def hitting_probabilities(P: sp.csr_matrix, target: np.ndarray):
    """Probability of ever entering ``target`` from each state, and the solve residual."""
    adj = P.copy()
    adj.setdiag(0)
    adj.eliminate_zeros()
    can_hit = _reaches(adj, target)
    rows = np.flatnonzero(can_hit & ~target)
    b = np.asarray(P[rows][:, np.flatnonzero(target)].sum(axis=1)).ravel()
    x, residual = _solve(P, rows, b)
    h = target.astype(np.float64)
    h[rows] = x
    return h, residual


def _fraction_solve(A: list, b: list) -> list:
    """Gauss-Jordan elimination over Fractions."""
    m = len(b)
    M = [row[:] + [b[i]] for i, row in enumerate(A)]
    for col in range(m):
        piv = next((r for r in range(col, m) if M[r][col] != 0), None)
        if piv is None:
            raise SingularChain("exact transient system is singular")
        M[col], M[piv] = M[piv], M[col]
        pv = M[col][col]
        M[col] = [v / pv for v in M[col]]
        for r in range(m):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [a - f * c for a, c in zip(M[r], M[col])]
    return [M[r][m] for r in range(m)]


# -- chain ---------------------------------------------------------------------

@dataclass
class ChainAnalysis:
    """Lumped asynchronous chain with its absorption analysis.

    ``p_decision[s]`` is the probability of ever reaching Z >= k from state
    ``s``; ``expected_steps[s]`` the expected number of steps until the
    chain is absorbed (``inf`` if absorption is not certain).
    """

    config: GameConfig
    lumping: Lumping
    states: list
    transitions: list  # per state: list of (target index, Fraction)
    matrix: sp.csr_matrix
    classification: list
    p_decision: np.ndarray
    expected_steps: np.ndarray
    residual: float

    @property
    def k(self) -> int:
        return self.config.k

    def z(self, s: int) -> int:
        return self.lumping.z(self.states[s])

    def census(self) -> dict:
        out = {TRANSIENT: 0, DECISION: 0, NO_DECISION: 0, RECURRENT: 0}
        for c in self.classification:
            out[c] += 1
        return out

    def absorbing(self, kind: str = NO_DECISION) -> list:
        return [s for s, c in enumerate(self.classification) if c == kind]

    def to_dict(self) -> dict:
        def num(v):
            return None if not math.isfinite(v) else float(v)

        return {
            "population": str(self.config.population),
            "k": self.k,
            "classes": self.lumping.labels(),
            "class_sizes": list(self.lumping.sizes),
            "pinned_ones": self.lumping.n_c,
            "states": [list(s) for s in self.states],
            "transitions": [
                [s, t, float(p)] for s, row in enumerate(self.transitions) for t, p in row
            ],
            "classification": self.classification,
            "p_decision": [num(v) for v in self.p_decision],
            "expected_steps": [num(v) for v in self.expected_steps],
            "residual": self.residual,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def build_chain(config: GameConfig, cap: int = DEFAULT_STATE_CAP) -> ChainAnalysis:
    """Enumerate, fill and solve the lumped asynchronous chain."""
    if config.mode is not Mode.ASYNC:
        raise UnsupportedMode("lumped chains are built for asynchronous games only")
    lump = Lumping(config.population)
    if lump.n_states > cap:
        raise StateSpaceTooLarge(f"{lump.n_states} lumped states exceed the cap of {cap}")
    k = config.k
    states = list(lump.states())
    N = len(states)
    transitions, rows, cols, vals = [], [], [], []
    decision = np.zeros(N, dtype=bool)
    stuck = np.zeros(N, dtype=bool)
    for s, counts in enumerate(states):
        row = []
        if lump.z(counts) >= k:
            decision[s] = True
        else:
            out = Fraction(0)
            for c, delta, p in lump.moves(counts):
                row.append((s + delta * lump.strides[c], p))
                out += p
            if out:
                row.append((s, 1 - out))
            else:
                stuck[s] = True
        if not row:
            row.append((s, Fraction(1)))
        transitions.append(row)
        for t, p in row:
            rows.append(s)
            cols.append(t)
            vals.append(float(p))
    P = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))

    absorbing = decision | stuck
    h, res_h = hitting_probabilities(P, decision)
    adj = P.copy()
    adj.setdiag(0)
    adj.eliminate_zeros()
    reaches_absorbing = _reaches(adj, absorbing)
    recurrent = ~reaches_absorbing
    may_escape = _reaches(adj, recurrent)  # may wander into a closed non-absorbing class
    sure = ~absorbing & ~may_escape
    rows_t = np.flatnonzero(sure)
    tau, res_t = _solve(P, rows_t, np.ones(rows_t.size))
    steps = np.where(absorbing, 0.0, np.inf)
    steps[rows_t] = tau

    classification = []
    for s in range(N):
        if decision[s]:
            classification.append(DECISION)
        elif stuck[s]:
            classification.append(NO_DECISION)
        elif recurrent[s]:
            classification.append(RECURRENT)
        else:
            classification.append(TRANSIENT)
    return ChainAnalysis(config, lump, states, transitions, P, classification, h, steps,
                         max(res_h, res_t))


class Absorption(NamedTuple):
    p_decision: object
    expected_steps: object
    residual: float

    @property
    def p_no_decision(self):
        return 1 - self.p_decision


def absorption(chain: ChainAnalysis, initial_distribution=None, exact: bool = False) -> Absorption:
    """Decision probability and expected absorption time from an initial law.

    The default initial law is the model's t = 0 distribution. With
    ``exact=True`` both systems are solved over ``Fraction`` (intended for
    chains of at most a few hundred states).
    """
    if initial_distribution is None:
        initial_distribution = chain.lumping.initial_distribution()
    mu = list(initial_distribution)
    if len(mu) != len(chain.states):
        raise ValueError("initial distribution has the wrong length")
    total = sum(mu)
    if abs(float(total) - 1.0) > 1e-12:
        raise ValueError(f"initial distribution sums to {float(total)}, not 1")
    if exact:
        h, tau = exact_solution(chain)
        p = sum((Fraction(m) * hv for m, hv in zip(mu, h)), Fraction(0))
        if any(Fraction(m) != 0 and t is None for m, t in zip(mu, tau)):
            e = math.inf
        else:
            e = sum((Fraction(m) * t for m, t in zip(mu, tau) if Fraction(m) != 0), Fraction(0))
        return Absorption(p, e, 0.0)
    w = np.array([float(m) for m in mu])
    p = float(w @ chain.p_decision)
    live = w > 0
    e = float(w[live] @ chain.expected_steps[live]) if live.any() else 0.0
    return Absorption(p, e, chain.residual)


def exact_solution(chain: ChainAnalysis):
    """Rational hitting probabilities and expected steps (``None`` where infinite)."""
    N = len(chain.states)
    cls = chain.classification
    decision = [c == DECISION for c in cls]
    adj = chain.matrix.copy()
    adj.setdiag(0)
    adj.eliminate_zeros()
    can_hit = _reaches(adj, np.array(decision))

    def solve(rows, rhs_of):
        pos = {s: i for i, s in enumerate(rows)}
        A = [[Fraction(0)] * len(rows) for _ in rows]
        b = []
        for i, s in enumerate(rows):
            A[i][i] += 1
            for t, p in chain.transitions[s]:
                if t in pos:
                    A[i][pos[t]] -= p
            b.append(rhs_of(s))
        return dict(zip(rows, _fraction_solve(A, b))) if rows else {}

    rows_h = [s for s in range(N) if can_hit[s] and not decision[s]]
    hv = solve(rows_h, lambda s: sum((p for t, p in chain.transitions[s] if decision[t]), Fraction(0)))
    h = [Fraction(1) if decision[s] else hv.get(s, Fraction(0)) for s in range(N)]

    finite = np.isfinite(chain.expected_steps)
    absorbing = [c in (DECISION, NO_DECISION) for c in cls]
    rows_t = [s for s in range(N) if finite[s] and not absorbing[s]]
    tv = solve(rows_t, lambda s: Fraction(1))
    tau = [Fraction(0) if absorbing[s] else tv.get(s) for s in range(N)]
    return h, tau


# -- drift ---------------------------------------------------------------------

def _lumping_for(config) -> Lumping:
    if isinstance(config, GameConfig):
        if config.mode is not Mode.ASYNC:
            raise UnsupportedMode("one-step drifts are defined for the asynchronous game")
        return Lumping(config.population)
    return Lumping(config)


def one_step_z_drift(config, lumped_state: Sequence[int]) -> Fraction:
    """Exact E[Z_{t+1} - Z_t | state] for the unhalted asynchronous dynamics."""
    lump = _lumping_for(config)
    return sum((delta * p for _, delta, p in lump.moves(lumped_state)), Fraction(0))


def one_step_w_drift(config, lumped_state: Sequence[int]) -> Fraction:
    """Exact E[W_{t+1} - W_t | state] for the unhalted asynchronous dynamics."""
    lump = _lumping_for(config)
    n = lump.n
    z = lump.z(lumped_state)
    w = 2 * z * (n - z)
    return sum(
        (p * (2 * (z + delta) * (n - z - delta) - w) for _, delta, p in lump.moves(lumped_state)),
        Fraction(0),
    )


# -- majority census ------------------------------------------------------------

def verify_lemma7(chain: ChainAnalysis) -> bool:
    """Every frozen no-decision state has all majority followers at opinion 0."""
    pop = chain.config.population
    if not pop.kinds() <= {RoleKind.REJECTOR, RoleKind.CONSENTOR, RoleKind.MAJORITY}:
        raise PreconditionError("population must contain only rejectors, consentors "
                                "and majority followers")
    if pop.count(RoleKind.MAJORITY) < 2:
        raise PreconditionError("need at least two majority followers")
    lump = chain.lumping
    c = lump.classes.index(Role(RoleKind.MAJORITY))
    return all(chain.states[s][c] == 0 for s in chain.absorbing(NO_DECISION))


# -- full 2^n chain ------------------------------------------------------------

def full_chain(config: GameConfig, max_agents: int = 12):
    """Unlumped asynchronous chain over all 2^n opinion vectors.

    Returns ``(P, decision_mask)``; state ``s`` has agent ``i`` at bit ``i``.
    Used as an independent check on the lumping.
    """
    pop = config.population
    n = pop.n
    if n > max_agents:
        raise StateSpaceTooLarge(f"2^{n} full states exceed the limit of 2^{max_agents}")
    ra = RoleArrays.from_population(pop)
    S = 1 << n
    s = np.arange(S)
    bits = (s[:, None] >> np.arange(n)[None, :]) & 1
    z = bits.sum(axis=1)
    decision = z >= config.k
    rows, cols, vals = [], [], []
    stay = np.ones(S)
    for i in range(n):
        xi = bits[:, i]
        p1 = prob_one_array(ra.kind[i], ra.p[i], xi, z - xi, n)
        flip = np.where(xi == 1, 1.0 - p1, p1) / n
        live = (flip > 0) & ~decision
        rows.append(s[live])
        cols.append(s[live] ^ (1 << i))
        vals.append(flip[live])
        stay[live] -= flip[live]
    rows.append(s)
    cols.append(s)
    vals.append(stay)
    P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(S, S))
    return P, decision


def full_to_lumped(config: GameConfig) -> np.ndarray:
    """Lumped state index of every full state; -1 where a pinned agent holds the wrong opinion."""
    pop = config.population
    lump = Lumping(pop)
    S = 1 << pop.n
    s = np.arange(S)
    out = np.zeros(S, dtype=np.int64)
    valid = np.ones(S, dtype=bool)
    for i, role in enumerate(pop):
        bit = (s >> i) & 1
        if role.pinned is None:
            out += bit * lump.strides[lump.class_of(role)]
        else:
            valid &= bit == role.pinned
    out[~valid] = -1
    return out


# -- synchronous Bernoulli populations -------------------------------------------

def _bernoulli_only(pop: Population) -> list:
    if pop.n_followers:
        raise PreconditionError("synchronous exact analysis covers rejectors, consentors "
                                "and Bernoulli agents only")
    return [r.p for r in pop if r.pinned is None]


def poisson_binomial_tail(probabilities: Sequence[float], threshold: int) -> float:
    """P(sum of independent Bernoulli(p_i) >= threshold) by convolution."""
    ps = np.asarray(probabilities, dtype=np.float64)
    m = ps.size
    if np.any((ps < 0) | (ps > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    if threshold <= 0:
        return 1.0
    if threshold > m:
        return 0.0
    pmf = np.zeros(m + 1)
    pmf[0] = 1.0
    for j, p in enumerate(ps):
        head = pmf[: j + 2].copy()
        pmf[1 : j + 2] = head[1:] * (1.0 - p) + head[:-1] * p
        pmf[0] = head[0] * (1.0 - p)
    return float(min(1.0, pmf[threshold:].sum()))


def phi(z: float) -> float:
    """Standard normal CDF."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_approx_p(n_eff: int, p_agent: float, k_eff: float) -> float:
    """Normal approximation to P(Binomial(n_eff, p_agent) >= k_eff), no continuity correction."""
    if n_eff < 1:
        raise ValueError("n_eff must be >= 1")
    if not 0.0 < p_agent < 1.0:
        raise DegenerateVariance(f"agent probability {p_agent} has zero variance")
    zscore = (k_eff - n_eff * p_agent) / math.sqrt(n_eff * p_agent * (1.0 - p_agent))
    return 0.5 * math.erfc(zscore / math.sqrt(2.0))


def lemma2_bounds(config: GameConfig) -> tuple:
    """Normal-approximation per-round success at the largest and smallest p_i.

    Every non-rejector counts, consentors as p = 1 (which raises
    :class:`DegenerateVariance`).
    """
    pop = config.population
    _bernoulli_only(pop)
    ps = [1.0] * pop.n_c + [r.p for r in pop if r.pinned is None]
    if not ps:
        raise PreconditionError("no non-rejector agents")
    n_eff = pop.n - pop.n_r
    return normal_approx_p(n_eff, max(ps), config.k), normal_approx_p(n_eff, min(ps), config.k)


class GeometricLaw(NamedTuple):
    p: float
    expected_T: float
    expected_rounds: float


def geometric_decision_law(config: GameConfig) -> GeometricLaw:
    """Exact per-round decision probability of a synchronous Bernoulli population.

    Each round redraws every Bernoulli agent, so T is geometric on
    {0, 1, ...} with success probability ``p``; rounds = E[T] + 1 = 1/p.
    With ``k <= n_c`` the game is decided before anything is drawn and
    ``(1, 0, 0)`` is returned. With ``k > n - n_r`` no decision is possible
    and ``(0, inf, inf)`` is returned.
    """
    if config.mode is not Mode.SYNC:
        raise UnsupportedMode("the geometric law describes the synchronous game")
    pop = config.population
    ps = _bernoulli_only(pop)
    if config.k <= pop.n_c:
        return GeometricLaw(1.0, 0.0, 0.0)
    if config.k > pop.n - pop.n_r:
        return GeometricLaw(0.0, math.inf, math.inf)
    p = poisson_binomial_tail(ps, config.k - pop.n_c)
    if p == 0.0:
        return GeometricLaw(0.0, math.inf, math.inf)
    return GeometricLaw(p, (1.0 - p) / p, 1.0 / p)


def sync_bernoulli_chain(config: GameConfig):
    """Lumped synchronous chain of a Bernoulli population: ``(P, decision_mask)``.

    Every round draws a fresh state, so each non-decision row is the product
    binomial law regardless of the current state.
    """
    pop = config.population
    _bernoulli_only(pop)
    lump = Lumping(pop)
    if lump.n_states > DEFAULT_STATE_CAP:
        raise StateSpaceTooLarge(f"{lump.n_states} lumped states exceed the cap")
    fresh = np.array([float(w) for w in lump.initial_distribution()])
    decision = np.array([lump.z(c) >= config.k for c in lump.states()])
    P = np.tile(fresh, (lump.n_states, 1))
    P[decision] = 0.0
    P[decision, np.flatnonzero(decision)] = 1.0
    return sp.csr_matrix(P), decision, fresh


def sync_decision_probability(config: GameConfig) -> float:
    """Probability that a synchronous Bernoulli game ever decides."""
    if config.mode is not Mode.SYNC:
        raise UnsupportedMode("synchronous analysis only")
    P, decision, fresh = sync_bernoulli_chain(config)
    h, _ = hitting_probabilities(P, decision)
    return float(fresh @ h)
