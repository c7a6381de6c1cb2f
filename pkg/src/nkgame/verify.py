"""Parameter sweeps cross-checking exact chains, closed-form bounds and Monte Carlo.

Each sweep yields :class:`Row` records; a row passes or fails on its own.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from nkgame import exact, formulas
from nkgame.model import (
    CONSENTOR,
    MAJORITY_FOLLOWER,
    MINORITY_FOLLOWER,
    RANDOM_FOLLOWER,
    REJECTOR,
    GameConfig,
    Population,
    parse_population,
)
from nkgame.montecarlo import estimate

DEFAULT_GRID = {
    "random_bound": {"n": [3, 4, 5, 6, 7, 8]},
    "majority_bound": {"n": [4, 5, 6, 7, 8]},
    "consentor_sure": {"n": [3, 4, 5, 6, 7, 8]},
    "z_drift": {"n_max": 12},
    "w_sign": {"n_max": 8},
    "montecarlo": [
        {"pop": "1*rejector,2*random", "k": 2, "trials": 20000, "seed": 1},
        {"pop": "1*consentor,1*rejector,2*majority", "k": 3, "trials": 20000, "seed": 1},
    ],
}

COLUMNS = ("check", "config", "exact", "bound", "mc", "ci_lo", "ci_hi", "pass")


@dataclass(frozen=True)
class Row:
    check: str
    config: str
    exact: object = None
    bound: object = None
    mc: Optional[float] = None
    ci_lo: Optional[float] = None
    ci_hi: Optional[float] = None
    passed: bool = False

    def as_dict(self) -> dict:
        return {
            "check": self.check,
            "config": self.config,
            "exact": self.exact,
            "bound": self.bound,
            "mc": self.mc,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "pass": self.passed,
        }


def _pop(n_c=0, n_r=0, follower=None, n_f=0) -> Population:
    terms = [(n_c, CONSENTOR), (n_r, REJECTOR)]
    if follower is not None:
        terms.append((n_f, follower))
    return Population.from_counts(*terms)


def random_bound_configs(ns: Iterable[int]):
    for n in ns:
        for n_r in range(1, n - 1):
            for k in range(1, n - n_r + 1):
                yield n, n_r, k


def random_bound_rows(ns: Iterable[int]):
    for n, n_r, k in random_bound_configs(ns):
        chain = exact.build_chain(GameConfig(_pop(n_r=n_r, follower=RANDOM_FOLLOWER, n_f=n - n_r), k))
        p = exact.absorption(chain, exact=True).p_decision
        b = formulas.theorem1_bound(n, n_r, k)
        yield Row("random_bound", f"n={n},n_r={n_r},k={k}", p, b, passed=p <= b)


def majority_bound_configs(ns: Iterable[int]):
    for n in ns:
        for n_c in range(1, n - 1):
            for n_r in range(0, n - n_c - 1):
                for k in range(n_c + 1, n - n_r + 1):
                    yield n, n_c, n_r, k


def majority_bound_rows(ns: Iterable[int], census: bool = True):
    for n, n_c, n_r, k in majority_bound_configs(ns):
        pop = _pop(n_c, n_r, MAJORITY_FOLLOWER, n - n_c - n_r)
        chain = exact.build_chain(GameConfig(pop, k))
        q = exact.absorption(chain, exact=True).p_no_decision
        b = formulas.theorem2_bound(n, n_c, n_r)
        label = f"n={n},n_c={n_c},n_r={n_r},k={k}"
        yield Row("majority_bound", label, q, b, passed=q <= b)
        if census:
            yield Row("majority_census", label, len(chain.absorbing(exact.NO_DECISION)),
                      passed=exact.verify_lemma7(chain))


def consentor_sure_rows(ns: Iterable[int]):
    for n in ns:
        for n_c in range(1, n):
            for n_r in range(0, n - n_c):
                for k in range(n_c + 1, n - n_r + 1):
                    pop = _pop(n_c, n_r, RANDOM_FOLLOWER, n - n_c - n_r)
                    chain = exact.build_chain(GameConfig(pop, k))
                    p = exact.absorption(chain).p_decision
                    yield Row("consentor_sure", f"n={n},n_c={n_c},n_r={n_r},k={k}", p, 1,
                              passed=abs(p - 1.0) < 1e-10 and chain.residual < 1e-10)


def z_drift_max_error(n: int) -> Fraction:
    """Largest |exact Z drift + n_r z / (n(n-1))| over n_r < n and all states."""
    worst = Fraction(0)
    for n_r in range(0, n):
        pop = _pop(n_r=n_r, follower=RANDOM_FOLLOWER, n_f=n - n_r)
        for z in range(0, n - n_r + 1):
            drift = exact.one_step_z_drift(pop, (z,))
            worst = max(worst, abs(drift + Fraction(n_r * z, n * (n - 1))))
    return worst


def z_drift_rows(n_max: int):
    for n in range(2, n_max + 1):
        err = z_drift_max_error(n)
        yield Row("z_drift", f"n={n}", err, 0, passed=err == 0)


def w_drift_extreme(n: int, follower) -> Fraction:
    """Max (majority) or min (minority) exact W drift over every split and state."""
    pick = max if follower == MAJORITY_FOLLOWER else min
    out = None
    for n_c in range(0, n):
        for n_r in range(0, n - n_c):
            pop = _pop(n_c, n_r, follower, n - n_c - n_r)
            lump = exact.Lumping(pop)
            for counts in lump.states():
                d = exact.one_step_w_drift(pop, counts)
                out = d if out is None else pick(out, d)
    return out


def w_sign_rows(n_max: int):
    for n in range(2, n_max + 1):
        hi = w_drift_extreme(n, MAJORITY_FOLLOWER)
        yield Row("w_sign_majority", f"n={n}", hi, 0, passed=hi <= 0)
        lo = w_drift_extreme(n, MINORITY_FOLLOWER)
        yield Row("w_sign_minority", f"n={n}", lo, 0, passed=lo >= 0)


def montecarlo_row(entry: dict, workers: int = 1) -> Row:
    pop = parse_population(entry["pop"])
    cfg = GameConfig(pop, int(entry["k"]), entry.get("mode", "async"),
                     int(entry.get("seed", 0)), entry.get("max_steps"))
    est = estimate(cfg, int(entry.get("trials", 10000)), workers=workers)
    chain = exact.build_chain(cfg)
    p = exact.absorption(chain).p_decision
    lo, hi = est.wilson_ci_99
    return Row("montecarlo", f"pop={entry['pop']},k={cfg.k},seed={cfg.master_seed}",
               p, None, est.p_decision_hat, lo, hi, passed=lo <= p <= hi)


def run_grid(grid: dict, workers: int = 1) -> list:
    rows: list = []
    if "random_bound" in grid:
        rows += random_bound_rows(grid["random_bound"]["n"])
    if "majority_bound" in grid:
        rows += majority_bound_rows(grid["majority_bound"]["n"], grid["majority_bound"].get("majority_census", True))
    if "consentor_sure" in grid:
        rows += consentor_sure_rows(grid["consentor_sure"]["n"])
    if "z_drift" in grid:
        rows += z_drift_rows(grid["z_drift"]["n_max"])
    if "w_sign" in grid:
        rows += w_sign_rows(grid["w_sign"]["n_max"])
    for entry in grid.get("montecarlo", []):
        rows.append(montecarlo_row(entry, workers))
    return rows
