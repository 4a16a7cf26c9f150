"""Independent reference computations used by the tests.

Everything here is written from the textbook definitions in arbitrary
precision (mpmath) or exact rationals, without touching canary internals.
"""

from fractions import Fraction
from math import comb

import mpmath as mp

mp.mp.dps = 40


def binom_pmf_exact(x, n, p):
    p = Fraction(p)
    return comb(n, x) * p**x * (1 - p) ** (n - x)


def binom_pmf_mp(x, n, p):
    p = mp.mpf(p)
    return mp.binomial(n, x) * p**x * (1 - p) ** (n - x)


def binom_cdf_mp(x, n, p):
    """P(X <= x) by summing terms outward from x with a ratio recursion."""
    if x < 0:
        return mp.mpf(0)
    if x >= n:
        return mp.mpf(1)
    p = mp.mpf(p)
    q = 1 - p
    mean = n * p
    if x < mean:
        term = binom_pmf_mp(x, n, p)
        total = term
        k = x
        while k > 0:
            term = term * k / (n - k + 1) * q / p
            k -= 1
            total += term
            if term < total * mp.mpf(10) ** -35:
                break
        return total
    return 1 - binom_sf_mp(x, n, p)


def binom_sf_mp(x, n, p):
    """P(X > x) by summing terms upward from x + 1."""
    if x < 0:
        return mp.mpf(1)
    if x >= n:
        return mp.mpf(0)
    p = mp.mpf(p)
    q = 1 - p
    mean = n * p
    if x + 1 > mean:
        k = x + 1
        term = binom_pmf_mp(k, n, p)
        total = term
        while k < n:
            term = term * (n - k) / (k + 1) * p / q
            k += 1
            total += term
            if term < total * mp.mpf(10) ** -35:
                break
        return total
    return 1 - binom_cdf_mp(x, n, p)


def poisson_pmf_mp(x, mu):
    mu = mp.mpf(mu)
    return mp.exp(-mu) * mu**x / mp.factorial(x)


def poisson_cdf_mp(x, mu):
    return mp.fsum(poisson_pmf_mp(i, mu) for i in range(x + 1))


def negbin_pmf_mp(x, mu, r):
    mu, r = mp.mpf(mu), mp.mpf(r)
    p = r / (r + mu)
    return mp.gamma(x + r) / (mp.gamma(r) * mp.factorial(x)) * p**r * (1 - p) ** x


def negbin_cdf_mp(x, mu, r):
    return mp.fsum(negbin_pmf_mp(i, mu, r) for i in range(x + 1))


def quantile_by_scan(cdf, u, start=0):
    x = start
    while cdf(x) < u:
        x += 1
    return x


def _tail_sum(first, ratio, stop):
    # sum first * prod(ratio(i)) until terms are negligible or the index hits stop
    total = term = first
    i = 0
    while i != stop:
        term = term * ratio(i)
        i += 1
        total += term
        if term < total * mp.mpf(10) ** -35:
            break
    return total


def poisson_tails_mp(x, mu):
    """(P(X <= x), P(X > x)) with the far tail summed and the near one as its complement."""
    mu = mp.mpf(mu)
    if x < 0:
        return mp.mpf(0), mp.mpf(1)
    if x < mu:
        low = _tail_sum(poisson_pmf_mp(x, mu), lambda i: (x - i) / mu, x)
        return low, 1 - low
    up = _tail_sum(poisson_pmf_mp(x + 1, mu), lambda i: mu / (x + 2 + i), -1)
    return 1 - up, up


def negbin_tails_mp(x, mu, r):
    mu, r = mp.mpf(mu), mp.mpf(r)
    q = mu / (r + mu)
    if x < 0:
        return mp.mpf(0), mp.mpf(1)
    mode = (r - 1) * q / (1 - q)
    if x < mode:
        low = _tail_sum(negbin_pmf_mp(x, mu, r), lambda i: (x - i) / ((x - i - 1 + r) * q), x)
        return low, 1 - low
    up = _tail_sum(negbin_pmf_mp(x + 1, mu, r), lambda i: (x + 1 + i + r) * q / (x + 2 + i), -1)
    return 1 - up, up
