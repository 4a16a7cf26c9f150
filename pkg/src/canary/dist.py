"""Binomial, Poisson and negative-binomial laws with exact pmf/cdf/quantile.

Mass functions are evaluated in log space through saddle-point expansions
and exponentiated. Binomial tails are summed term by term from the far side
of the mode; Poisson and negative-binomial tails use the regularized
incomplete gamma / beta functions. ``sf`` is provided so that upper tails
never go through ``1 - cdf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from . import _loader
from .errors import InvalidParameterError, SupportMismatchError
from .kernels import binom_logtail

TAIL_MASS = 1e-14


def _floor_int(x):
    return np.floor(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class BinomialLaw:
    n: int
    p: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParameterError(f"binomial n must be a positive integer, got {self.n!r}")
        if not 0.0 < self.p < 1.0:
            raise InvalidParameterError(f"binomial p must lie in (0, 1), got {self.p!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", float(self.p))

    @property
    def mean(self):
        return self.n * self.p

    @property
    def var(self):
        return self.n * self.p * (1.0 - self.p)

    def logpmf(self, x):
        x = np.asarray(x, dtype=np.float64)
        n, p = self.n, self.p
        inside = (x >= 0) & (x <= n) & (x == np.floor(x))
        xs = np.where(inside, x, 0.0)
        out = _loader.binom_raw_logpmf(xs, float(n), p, 1.0 - p)
        out = np.where(inside, out, -np.inf)
        return out[()] if out.ndim == 0 else out

    def pmf(self, x):
        return np.exp(self.logpmf(x))

    def logcdf(self, x):
        out = binom_logtail(x, self.n, self.p, upper=False)
        return out[()] if out.ndim == 0 else out

    def logsf(self, x):
        out = binom_logtail(x, self.n, self.p, upper=True)
        return out[()] if out.ndim == 0 else out

    def cdf(self, x):
        return np.exp(self.logcdf(x))

    def sf(self, x):
        return np.exp(self.logsf(x))

    def quantile(self, u):
        return _quantile(self, u)

    def support_max(self, tail=TAIL_MASS):
        return self.n

    def log_cdf_array(self):
        """log P(X <= x) for x = 0..n, accumulated in log space."""
        lp = self.logpmf(np.arange(self.n + 1))
        return np.logaddexp.accumulate(lp)

    def log_sf_array(self):
        """log P(X > x) for x = 0..n, accumulated from the upper tail."""
        lp = self.logpmf(np.arange(self.n + 1))
        rev = np.logaddexp.accumulate(lp[::-1])[::-1]
        out = np.full(self.n + 1, -np.inf)
        out[:-1] = rev[1:]
        return out


@dataclass(frozen=True)
class PoissonLaw:
    mu: float

    def __post_init__(self):
        if not (self.mu > 0.0 and math.isfinite(self.mu)):
            raise InvalidParameterError(f"Poisson mean must be positive and finite, got {self.mu!r}")
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def mean(self):
        return self.mu

    @property
    def var(self):
        return self.mu

    def logpmf(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = (x >= 0) & (x == np.floor(x))
        xs = np.where(inside, x, 0.0)
        out = _loader.poisson_logpmf(xs, self.mu)
        out = np.where(inside, out, -np.inf)
        return out[()] if out.ndim == 0 else out

    def pmf(self, x):
        return np.exp(self.logpmf(x))

    def cdf(self, x):
        k = _floor_int(x)
        out = special.pdtr(np.maximum(k, 0), self.mu)
        out = np.where(k < 0, 0.0, out)
        return out[()] if out.ndim == 0 else out

    def sf(self, x):
        k = _floor_int(x)
        out = special.pdtrc(np.maximum(k, 0), self.mu)
        out = np.where(k < 0, 1.0, out)
        return out[()] if out.ndim == 0 else out

    def quantile(self, u):
        return _quantile(self, u)

    def support_max(self, tail=TAIL_MASS):
        return _tail_cut(self, tail)


@dataclass(frozen=True)
class NegBinLaw:
    """Negative binomial with mean ``mu`` and variance ``mu + mu**2 / dispersion``."""

    mu: float
    dispersion: float

    def __post_init__(self):
        if not (self.mu > 0.0 and math.isfinite(self.mu)):
            raise InvalidParameterError(f"negative-binomial mean must be positive, got {self.mu!r}")
        if not (self.dispersion > 0.0 and math.isfinite(self.dispersion)):
            raise InvalidParameterError(
                f"dispersion must be positive and finite, got {self.dispersion!r}; use PoissonLaw for the limit"
            )
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "dispersion", float(self.dispersion))

    @property
    def mean(self):
        return self.mu

    @property
    def var(self):
        return self.mu + self.mu**2 / self.dispersion

    @property
    def _prob(self):
        # success probability in the (size, prob) parametrization
        return self.dispersion / (self.dispersion + self.mu)

    def logpmf(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = (x >= 0) & (x == np.floor(x))
        xs = np.where(inside, x, 0.0)
        out = _loader.negbin_logpmf(xs, self.mu, self.dispersion)
        out = np.where(inside, out, -np.inf)
        return out[()] if out.ndim == 0 else out

    def pmf(self, x):
        return np.exp(self.logpmf(x))

    def cdf(self, x):
        k = _floor_int(x)
        kk = np.maximum(k, 0)
        out = special.betainc(self.dispersion, kk + 1.0, self._prob)
        out = np.where(k < 0, 0.0, out)
        return out[()] if out.ndim == 0 else out

    def sf(self, x):
        k = _floor_int(x)
        kk = np.maximum(k, 0)
        out = special.betaincc(self.dispersion, kk + 1.0, self._prob)
        out = np.where(k < 0, 1.0, out)
        return out[()] if out.ndim == 0 else out

    def quantile(self, u):
        return _quantile(self, u)

    def support_max(self, tail=TAIL_MASS):
        return _tail_cut(self, tail)


DiscreteDist = Union[BinomialLaw, PoissonLaw, NegBinLaw]


def _tail_cut(law, tail):
    """Smallest integer K with P(X > K) < tail."""
    lo = -1
    hi = max(1, int(math.ceil(law.mean + 10.0 * math.sqrt(law.var) + 10)))
    while law.sf(hi) >= tail:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if law.sf(mid) < tail:
            hi = mid
        else:
            lo = mid
    return hi


def _quantile(law, u):
    """Smallest integer x with cdf(x) >= u, by bracket growth from the mean and bisection."""
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any(~((u_arr > 0.0) & (u_arr < 1.0))):
        raise InvalidParameterError("quantile level must lie strictly inside (0, 1)")
    u_flat = u_arr.ravel()
    upper = law.n if isinstance(law, BinomialLaw) else None
    x0 = np.full(u_flat.shape, int(math.floor(law.mean)), dtype=np.int64)
    if upper is not None:
        x0 = np.minimum(x0, upper)
    at = law.cdf(x0) >= u_flat
    lo = np.where(at, -1, x0).astype(np.int64)
    hi = np.where(at, x0, 0).astype(np.int64)

    # grow the bracket away from the mean
    step = 1
    down = at.copy()
    while down.any():
        cand = x0 - step
        cand_ok = cand >= 0
        f = np.where(cand_ok, law.cdf(np.maximum(cand, 0)), 0.0)
        still = down & cand_ok & (f >= u_flat)
        hi = np.where(still, cand, hi)
        done = down & ~still
        lo = np.where(done & cand_ok, cand, lo)
        down = still
        step *= 2
    step = 1
    up = ~at
    while up.any():
        cand = x0 + step
        if upper is not None:
            cand = np.minimum(cand, upper)
        f = law.cdf(cand)
        reached = up & (f >= u_flat)
        hi = np.where(reached, cand, hi)
        lo = np.where(up & ~reached, cand, lo)
        up = up & ~reached
        step *= 2

    while True:
        gap = hi - lo > 1
        if not gap.any():
            break
        mid = (lo + hi) // 2
        f = law.cdf(np.maximum(mid, 0))
        go_hi = gap & (f >= u_flat)
        hi = np.where(go_hi, mid, hi)
        lo = np.where(gap & ~go_hi, mid, lo)
    out = hi.reshape(u_arr.shape)
    return int(out) if out.ndim == 0 else out


def binomial_quantile_grid(ns, p, u):
    """Binomial ``u``-quantile for every sample size in ``ns`` at fixed ``p``."""
    ns = np.asarray(ns, dtype=np.int64)
    if np.any(ns < 1) or not 0.0 < p < 1.0 or not 0.0 < u < 1.0:
        raise InvalidParameterError("invalid binomial quantile grid arguments")
    log_u = math.log(u)

    def below(x):
        # cdf(x) < u, with cdf(-1) = 0
        return binom_logtail(x, ns_f, p) < log_u

    ns_f = ns.astype(np.float64)
    # normal-scale starting bracket, kept only where it is verified
    sd = np.sqrt(ns * p * (1 - p))
    g_lo = np.maximum(np.floor(ns * p - 10.0 * sd - 2).astype(np.int64), -1)
    g_hi = np.minimum(np.ceil(ns * p + 10.0 * sd + 2).astype(np.int64), ns)
    lo = np.where(below(g_lo), g_lo, -1)
    hi = np.where(~below(g_hi), g_hi, ns)
    while True:
        gap = hi - lo > 1
        if not gap.any():
            break
        mid = (lo + hi) // 2
        go_lo = below(mid)
        lo = np.where(gap & go_lo, mid, lo)
        hi = np.where(gap & ~go_lo, mid, hi)
    return hi


def pmf(law: DiscreteDist, x):
    return law.pmf(x)


def logpmf(law: DiscreteDist, x):
    return law.logpmf(x)


def cdf(law: DiscreteDist, x):
    return law.cdf(x)


def sf(law: DiscreteDist, x):
    return law.sf(x)


def quantile(law: DiscreteDist, u):
    return law.quantile(u)


def pmf_sup_bound(n, p):
    """Upper bound sqrt(1 / (2 e n p (1 - p))) on the largest binomial mass."""
    if int(n) != n or n < 1 or not 0.0 < p < 1.0:
        raise InvalidParameterError("pmf_sup_bound needs integer n >= 1 and p in (0, 1)")
    return math.sqrt(1.0 / (2.0 * math.e * n * p * (1.0 - p)))


def pmf_table(law: DiscreteDist, tail=1e-12):
    """Masses on 0..K where K truncates the upper tail below ``tail``."""
    top = law.support_max(tail)
    return law.pmf(np.arange(top + 1))


def total_variation(a, b, tail=1e-12, tol=1e-9):
    """Total-variation distance between two laws or two pmf arrays on 0, 1, 2, ...

    Laws are truncated where their upper tail drops below ``tail``. Raises
    :class:`SupportMismatchError` when either side leaves more than ``tol``
    of its mass outside the common support.
    """
    pa = pmf_table(a, tail) if not isinstance(a, np.ndarray) else np.asarray(a, dtype=np.float64)
    pb = pmf_table(b, tail) if not isinstance(b, np.ndarray) else np.asarray(b, dtype=np.float64)
    size = max(pa.size, pb.size)
    pa = np.pad(pa, (0, size - pa.size))
    pb = np.pad(pb, (0, size - pb.size))
    for name, arr in (("first", pa), ("second", pb)):
        missing = abs(1.0 - math.fsum(arr))
        if missing > tol:
            raise SupportMismatchError(f"{name} distribution leaves {missing:.3g} mass outside the support")
    return min(1.0, 0.5 * math.fsum(np.abs(pa - pb)))
