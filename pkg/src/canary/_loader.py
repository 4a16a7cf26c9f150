"""Saddle-point evaluation of binomial-type log masses (Loader, 2000).

Writing log C(n, x) p^x q^(n-x) as Stirling remainders plus deviance terms
avoids the cancellation between large log-gamma values that costs several
digits once n reaches 10^4 and beyond.
"""

import math

import numpy as np
from scipy import special

LN_2PI = math.log(2.0 * math.pi)
_LN_SQRT_2PI = 0.5 * LN_2PI
_S0 = 1.0 / 12.0
_S1 = 1.0 / 360.0
_S2 = 1.0 / 1260.0
_S3 = 1.0 / 1680.0
_S4 = 1.0 / 1188.0


def stirlerr(n):
    """log(n!) - log(sqrt(2 pi n) (n / e)^n), vectorized over real n >= 0."""
    n = np.asarray(n, dtype=np.float64)
    out = np.zeros(n.shape)
    small = (n <= 15.0) & (n > 0.0)
    ns = n[small]
    out[small] = special.gammaln(ns + 1.0) - (ns + 0.5) * np.log(ns) + ns - _LN_SQRT_2PI
    big = n > 15.0
    nb = n[big]
    nn = nb * nb
    out[big] = (_S0 - (_S1 - (_S2 - (_S3 - _S4 / nn) / nn) / nn) / nn) / nb
    return out


def bd0(x, m):
    """Deviance term x log(x / m) + m - x, stable when x is close to m."""
    x, m = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(m, dtype=np.float64))
    out = np.empty(x.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        near = np.abs(x - m) < 0.1 * (x + m)
        far = ~near
        out[far] = x[far] * np.log(x[far] / m[far]) + m[far] - x[far]
        zero_x = far & (x == 0.0)
        out[zero_x] = m[zero_x]
        xs, ms = x[near], m[near]
        v = (xs - ms) / (xs + ms)
        s = (xs - ms) * v
        ej = 2.0 * xs * v
        v2 = v * v
        live = np.ones(xs.shape, dtype=bool)
        j = 1
        while live.any() and j < 1000:
            ej = ej * v2
            s1 = s + ej / (2 * j + 1)
            live = s1 != s
            s = s1
            j += 1
        out[near] = s
    return out


def binom_raw_logpmf(x, n, p, q):
    """log of C(n, x) p^x q^(n - x) for real 0 <= x <= n; q is passed to keep 1 - p exact."""
    x, n, p, q = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (x, n, p, q)))
    out = np.empty(x.shape)
    lo = x == 0.0
    hi = (x == n) & ~lo
    mid = ~(lo | hi)
    out[lo] = n[lo] * np.log(q[lo])
    out[hi] = n[hi] * np.log(p[hi])
    xm, nm, pm, qm = x[mid], n[mid], p[mid], q[mid]
    lc = (
        stirlerr(nm)
        - stirlerr(xm)
        - stirlerr(nm - xm)
        - bd0(xm, nm * pm)
        - bd0(nm - xm, nm * qm)
    )
    lf = LN_2PI + np.log(xm) + np.log1p(-xm / nm)
    out[mid] = lc - 0.5 * lf
    return out


def poisson_logpmf(x, mu):
    x, mu = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(mu, dtype=np.float64))
    out = np.empty(x.shape)
    zero = x == 0.0
    out[zero] = -mu[zero]
    xs, ms = x[~zero], mu[~zero]
    out[~zero] = -stirlerr(xs) - bd0(xs, ms) - 0.5 * (LN_2PI + np.log(xs))
    return out


def negbin_logpmf(x, mu, r):
    """Mean/dispersion negative binomial, via the binomial saddle point in (r, x + r)."""
    x = np.asarray(x, dtype=np.float64)
    p = r / (r + mu)
    q = mu / (r + mu)
    return np.log(r / (r + x)) + binom_raw_logpmf(r, x + r, p, q)
