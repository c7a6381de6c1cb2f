import logging
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from nkgame.errors import DomainError, PreconditionError
from nkgame.formulas import (
    expected_T_from_p,
    expected_w0,
    expected_w0_bruteforce,
    is_vacuous,
    theorem1_bound,
    theorem2_bound,
)


def test_random_follower_bound_examples():
    assert theorem1_bound(10, 5, 3) == Fraction(5, 6)
    assert theorem1_bound(4, 0, 2) == 1 and is_vacuous(theorem1_bound(4, 0, 2))
    assert theorem1_bound(3, 1, 2) == Fraction(1, 2)


def test_random_follower_bound_limit():
    # n_r and k both at n/2
    for n in (100, 1000, 10_000):
        assert theorem1_bound(2 * n, n, n) == Fraction(1, 2)
    assert float(theorem1_bound(2001, 1000, 1000)) == pytest.approx(0.5, abs=1e-3)


def test_random_follower_bound_domain():
    with pytest.raises(DomainError):
        theorem1_bound(5, 3, 3)
    with pytest.raises(DomainError):
        theorem1_bound(5, 1, 0)


def test_vacuous_bound_is_logged(caplog):
    with caplog.at_level(logging.INFO, logger="nkgame.formulas"):
        theorem1_bound(10, 0, 2)
    assert "vacuous" in caplog.text


def test_majority_bound_examples():
    assert theorem2_bound(8, 4, 0) == Fraction(44, 64)
    assert theorem2_bound(4, 1, 1) == Fraction(14, 12)
    assert is_vacuous(theorem2_bound(4, 1, 1))


def test_majority_bound_limit():
    values = [float(theorem2_bound(2 * m, m, 0)) for m in (10, 100, 1000, 100_000)]
    assert all(a < b for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(0.75, abs=1e-5)


def test_majority_bound_domain():
    with pytest.raises(DomainError):
        theorem2_bound(6, 0, 1)
    with pytest.raises(PreconditionError):
        theorem2_bound(5, 2, 2)


def test_expected_w0_examples():
    assert expected_w0(4, 1, 1) == 7
    assert expected_w0(4, 0, 0) == 6
    assert expected_w0(5, 2, 3) == 2 * 2 * 3


def test_expected_w0_matches_enumeration():
    for n in range(1, 13):
        for n_c in range(0, n + 1):
            for n_r in range(0, n - n_c + 1):
                assert expected_w0(n, n_c, n_r) == expected_w0_bruteforce(n, n_c, n_r)


@given(st.integers(3, 50).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(1, n - 2)).flatmap(lambda t: st.tuples(
        st.just(t[0]), st.just(t[1]), st.integers(0, t[0] - t[1] - 2)))))
def test_majority_bound_is_scaled_w0(args):
    n, n_c, n_r = args
    assert theorem2_bound(n, n_c, n_r) == expected_w0(n, n_c, n_r) / (2 * n_c * (n - n_c))


def test_expected_w0_domain():
    with pytest.raises(DomainError):
        expected_w0(4, 3, 2)


def test_expected_T_from_p():
    assert expected_T_from_p(Fraction(1, 2)) == 1
    assert expected_T_from_p(1) == 0
    assert expected_T_from_p(Fraction(319, 512)) == Fraction(193, 319)
    with pytest.raises(DomainError):
        expected_T_from_p(0)
