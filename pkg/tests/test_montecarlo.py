import logging
from fractions import Fraction

import numpy as np
import pytest

from oracles import binomial_tail, rejector_random_decision
from nkgame.exact import absorption, build_chain
from nkgame.model import (
    CONSENTOR,
    MAJORITY_FOLLOWER,
    MINORITY_FOLLOWER,
    NEUTRALIST,
    RANDOM_FOLLOWER,
    REJECTOR,
    GameConfig,
    Mode,
    Population,
    Role,
)
from nkgame.montecarlo import (
    Estimate,
    collect,
    estimate,
    run_trial,
    run_trials,
    wilson_interval,
)

P = Population.from_counts


def test_all_consentors_decide_at_zero():
    cfg = GameConfig(P((3, CONSENTOR)), 2)
    out = run_trial(cfg, 0)
    assert out.decided and out.decision_time == 0 and not out.frozen and out.final_z == 3
    est = estimate(cfg, 50)
    assert est.p_decision_hat == 1.0 and est.mean_decision_time == 0.0


def test_all_rejectors_freeze_at_zero():
    for k in (1, 2, 3):
        out = run_trial(GameConfig(P((3, REJECTOR)), k), 4)
        assert not out.decided and out.frozen and out.freeze_time == 0 and not out.truncated


def test_decision_at_t0_when_consentors_meet_threshold():
    cfg = GameConfig(P((2, CONSENTOR), (3, RANDOM_FOLLOWER), (1, REJECTOR)), 2)
    for i in range(20):
        out = run_trial(cfg, i)
        assert out.decided and out.decision_time == 0


CONFIGS = [
    GameConfig(P((1, REJECTOR), (2, RANDOM_FOLLOWER)), 2, master_seed=3),
    GameConfig(P((1, CONSENTOR), (1, REJECTOR), (2, MAJORITY_FOLLOWER)), 3, master_seed=4),
    GameConfig(P((1, CONSENTOR), (2, REJECTOR), (4, MINORITY_FOLLOWER)), 4, master_seed=5, max_steps=30),
    GameConfig(P((2, REJECTOR), (3, RANDOM_FOLLOWER), (2, MAJORITY_FOLLOWER), (1, NEUTRALIST)), 5,
               master_seed=6, max_steps=200),
    GameConfig(P((1, CONSENTOR), (6, NEUTRALIST), (1, Role.bernoulli(0.2))), 5, Mode.SYNC, 7),
    GameConfig(P((1, REJECTOR), (5, MAJORITY_FOLLOWER), (2, RANDOM_FOLLOWER)), 6, Mode.SYNC, 8,
               max_steps=40),
    GameConfig(P((1, REJECTOR), (1, NEUTRALIST)), 2, master_seed=9, max_steps=25),
]


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: f"{c.population}|k={c.k}|{c.mode.value}")
def test_vectorised_engine_reproduces_reference_trials(cfg):
    batch = run_trials(cfg, 100, 400)
    for j, i in enumerate(range(100, 400)):
        assert batch.outcome(j) == run_trial(cfg, i)


@pytest.mark.parametrize("cfg", CONFIGS[:4], ids=str)
def test_outcome_invariants(cfg):
    b = collect(cfg, 3000)
    assert np.all(~(b.decided & b.frozen))
    assert np.all(~(b.truncated & (b.decided | b.frozen)))
    assert np.all(b.decision_time[b.decided] <= cfg.max_steps)
    assert np.all(b.decided | b.frozen | b.truncated)


def test_chunking_and_workers_do_not_change_outcomes():
    cfg = CONFIGS[1]
    ref = collect(cfg, 5000)
    for kw in ({"chunk": 7}, {"chunk": 1234}, {"workers": 2, "chunk": 900}):
        other = collect(cfg, 5000, **kw)
        for f in ("decided", "decision_time", "frozen", "freeze_time", "truncated", "final_z"):
            assert np.array_equal(getattr(ref, f), getattr(other, f))
    assert estimate(cfg, 5000) == estimate(cfg, 5000, workers=2)


def test_spot_decision_frequency_matches_exact_value():
    cfg = GameConfig(P((1, REJECTOR), (2, RANDOM_FOLLOWER)), 2, master_seed=7)
    exact = rejector_random_decision(3, 1, 2)
    assert exact == Fraction(5, 12)
    est = estimate(cfg, 100_000)
    lo, hi = est.wilson_ci_99
    assert lo <= 5 / 12 <= hi


def test_wilson_interval_edges():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0 < hi < 0.07
    lo, hi = wilson_interval(100, 100)
    assert hi == 1.0 and lo > 0.93
    lo, hi = wilson_interval(37, 100)
    assert lo < 0.37 < hi
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


def test_wilson_interval_reference_value():
    # score interval for 50/100 at z = 2.5758293035489: centre 0.5, half-width
    # z/(1+z^2/n) * sqrt(0.25/n + z^2/(4 n^2))
    z = 2.5758293035489
    half = z / (1 + z * z / 100) * np.sqrt(0.25 / 100 + z * z / 40000)
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.5 - half, abs=1e-12)
    assert hi == pytest.approx(0.5 + half, abs=1e-12)


def test_sync_neutralists_first_round_success():
    cfg = GameConfig(P((10, NEUTRALIST)), 5, Mode.SYNC, master_seed=12)
    b = collect(cfg, 100_000)
    p = binomial_tail(10, Fraction(1, 2), 5)
    assert p == Fraction(319, 512)
    first = int((b.decision_time == 0).sum())
    from nkgame.montecarlo import wilson_interval as wi

    lo, hi = wi(first, len(b))
    assert lo <= float(p) <= hi
    assert b.decided.all()
    # rounds to decide = T + 1 has mean 1/p
    rounds = b.decision_time + 1
    assert abs(rounds.mean() - 512 / 319) < 4 * rounds.std() / np.sqrt(len(b))


def test_sync_decision_time_is_geometric():
    cfg = GameConfig(P((1, REJECTOR), (1, CONSENTOR), (8, Role.bernoulli(0.35))), 5, Mode.SYNC, 21)
    p = float(sum(binomial_tail(8, Fraction(35, 100), 4) for _ in [0]))
    b = collect(cfg, 200_000)
    T = b.decision_time
    survivors = [(T >= t).sum() for t in range(8)]
    for t in range(7):
        if survivors[t] < 2000:
            break
        ratio = survivors[t + 1] / survivors[t]
        se = np.sqrt(p * (1 - p) / survivors[t])
        assert abs(ratio - (1 - p)) < 3.3 * se


def test_truncation_is_reported(caplog):
    cfg = GameConfig(P((1, REJECTOR), (1, NEUTRALIST)), 2, master_seed=1, max_steps=50)
    with caplog.at_level(logging.WARNING):
        est = estimate(cfg, 200)
    assert est.truncation_rate == 1.0 and est.p_decision_hat == 0.0
    assert est.mean_decision_time is None
    assert "max_steps" in caplog.text


def test_coverage_meta_experiment():
    # the exact value should sit inside the 99% interval in at least 95% of repeats
    cases = [
        (GameConfig(P((1, REJECTOR), (3, RANDOM_FOLLOWER)), 2), None),
        (GameConfig(P((1, CONSENTOR), (1, REJECTOR), (3, MAJORITY_FOLLOWER)), 3), None),
        (GameConfig(P((1, CONSENTOR), (2, REJECTOR), (3, RANDOM_FOLLOWER)), 4), None),
    ]
    for cfg, _ in cases:
        exact = absorption(build_chain(cfg)).p_decision
        covered = 0
        for seed in range(40):
            c = GameConfig(cfg.population, cfg.k, cfg.mode, seed)
            lo, hi = estimate(c, 2000).wilson_ci_99
            covered += lo <= exact <= hi
        assert covered >= 38, (cfg, covered)


def test_estimate_from_batch_fields():
    cfg = CONFIGS[0]
    b = collect(cfg, 1000)
    est = Estimate.from_batch(b)
    assert est.n_trials == 1000
    lo, hi = est.wilson_ci_99
    assert lo <= est.p_decision_hat <= hi
    assert est.frozen_rate + est.p_decision_hat + est.truncation_rate == pytest.approx(1.0)
