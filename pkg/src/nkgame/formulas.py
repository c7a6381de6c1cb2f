"""Closed-form bounds and expectations, evaluated exactly over ``Fraction``.

Bounds above 1 are returned unclamped; :func:`is_vacuous` flags them.
"""

from __future__ import annotations

import logging
from fractions import Fraction
from itertools import product

from nkgame.errors import DomainError, PreconditionError

log = logging.getLogger(__name__)

__all__ = [
    "theorem1_bound",
    "theorem2_bound",
    "expected_w0",
    "expected_w0_bruteforce",
    "expected_T_from_p",
    "is_vacuous",
]


def is_vacuous(bound) -> bool:
    return bound >= 1


def theorem1_bound(n: int, n_r: int, k: int) -> Fraction:
    """Upper bound (n - n_r) / (2k) on the decision probability.

    Applies to the asynchronous game of ``n_r`` rejectors and ``n - n_r``
    random followers with ``1 <= k <= n - n_r``.
    """
    if n_r < 0 or n_r > n:
        raise DomainError(f"need 0 <= n_r <= n, got n={n}, n_r={n_r}")
    if k < 1:
        raise DomainError("threshold k must be >= 1")
    if k > n - n_r:
        raise DomainError(f"k={k} > n - n_r = {n - n_r}: a decision cannot be made")
    bound = Fraction(n - n_r, 2 * k)
    if bound > 1:
        log.info("decision bound %s exceeds 1 (vacuous)", bound)
    return bound


def expected_w0(n: int, n_c: int, n_r: int) -> Fraction:
    """E[W_0] with ``n - n_c - n_r`` followers starting i.i.d. Bernoulli(1/2)."""
    if n_c < 0 or n_r < 0 or n_c + n_r > n:
        raise DomainError(f"need n_c, n_r >= 0 and n_c + n_r <= n; got {n}, {n_c}, {n_r}")
    f = n - n_c - n_r
    return Fraction(f * (n + n_c + n_r - 1) + 4 * n_c * n_r, 2)


def expected_w0_bruteforce(n: int, n_c: int, n_r: int) -> Fraction:
    """E[2 Z_0 (n - Z_0)] by enumerating all follower initialisations."""
    f = n - n_c - n_r
    total = 0
    for bits in product((0, 1), repeat=f):
        z = n_c + sum(bits)
        total += 2 * z * (n - z)
    return Fraction(total, 2**f)


def theorem2_bound(n: int, n_c: int, n_r: int) -> Fraction:
    """Upper bound on the no-decision probability with majority followers.

    ``[(n - n_c - n_r)(n + n_c + n_r - 1) + 4 n_c n_r] / (4 n_c (n - n_c))``
    for ``n_c`` consentors, ``n_r`` rejectors and at least two majority
    followers.
    """
    if n_c < 1:
        raise DomainError("n_c must be >= 1 (the bound divides by n_c)")
    if n - n_c - n_r < 2:
        raise PreconditionError("need at least two majority followers")
    if n_r < 0:
        raise DomainError("n_r must be >= 0")
    bound = Fraction(
        (n - n_c - n_r) * (n + n_c + n_r - 1) + 4 * n_c * n_r,
        4 * n_c * (n - n_c),
    )
    if bound >= 1:
        log.info("no-decision bound %s is at least 1 (vacuous)", bound)
    return bound


def expected_T_from_p(p):
    """(1 - p) / p, the mean of a geometric time on {0, 1, ...}."""
    if p <= 0 or p > 1:
        raise DomainError(f"success probability must lie in (0, 1], got {p}")
    return (1 - p) / p
