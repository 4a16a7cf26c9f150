"""One-sided exact binomial test: critical value, size, power and sample size.

The test rejects ``H0: q <= p0`` when the number of positives exceeds the
``(1 - alpha)``-quantile of Binomial(n, p0). Power as a function of ``n`` is a
saw-tooth, so every search here scans rather than bisects.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .dist import BinomialLaw, binomial_quantile_grid
from .errors import InvalidParameterError, SearchExhaustedError, ZeroSampleError
from .kernels import binom_logtail

HARD_CAP = 10**7
_INT_TOL = 1e-9


class DegenerateTestWarning(UserWarning):
    """The critical value equals n, so the test can never reject."""


@dataclass(frozen=True)
class TestPlan:
    n: int
    p0: float
    alpha: float
    critical_value: int
    attained_size: float
    degenerate: bool = False

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class PowerPoint:
    n: int
    q: float
    power: float


def _check_prob(name, v, closed_low=False):
    ok = (0.0 <= v < 1.0) if closed_low else (0.0 < v < 1.0)
    if not ok:
        raise InvalidParameterError(f"{name} must lie in (0, 1), got {v!r}")


def make_plan(n, p0, alpha):
    """Exact test of size at most ``alpha`` for ``n`` Bernoulli(p0) draws."""
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n!r}")
    _check_prob("p0", p0)
    _check_prob("alpha", alpha)
    law = BinomialLaw(int(n), p0)
    crit = int(law.quantile(1.0 - alpha))
    size = float(law.sf(crit))
    degenerate = crit >= n
    if degenerate:
        warnings.warn(f"exact test with n={n}, p0={p0}, alpha={alpha} never rejects", DegenerateTestWarning, stacklevel=2)
    return TestPlan(int(n), float(p0), float(alpha), crit, size, degenerate)


def power(plan: TestPlan, q):
    """Rejection probability under Binomial(n, q)."""
    if not plan.p0 <= q <= 1.0:
        raise InvalidParameterError(f"alternative q={q!r} must satisfy p0 <= q <= 1")
    if q == 1.0:
        return 1.0 if plan.critical_value < plan.n else 0.0
    return float(np.exp(binom_logtail(plan.critical_value, plan.n, q, upper=True)))


def power_array(ns, p0, q, alpha):
    """Exact power at each sample size in ``ns`` (vectorized)."""
    _check_prob("p0", p0)
    _check_prob("alpha", alpha)
    if not p0 <= q < 1.0:
        raise InvalidParameterError("need p0 <= q < 1")
    ns = np.asarray(ns, dtype=np.int64)
    crit = binomial_quantile_grid(ns, p0, 1.0 - alpha)
    return np.exp(binom_logtail(crit, ns, q, upper=True))


def power_curve(p0, q, alpha, n_range):
    ns = np.asarray(list(n_range), dtype=np.int64)
    if ns.size == 0:
        raise InvalidParameterError("n_range must not be empty")
    pw = power_array(ns, p0, q, alpha)
    return [PowerPoint(int(n), float(q), float(v)) for n, v in zip(ns, pw)]


def _kl(a, b):
    # Bernoulli relative entropy KL(a || b)
    out = 0.0
    if a > 0.0:
        out += a * math.log(a / b)
    if a < 1.0:
        out += (1.0 - a) * math.log((1.0 - a) / (1.0 - b))
    return out


def chernoff_power_bound(n, p0, q, alpha):
    """Lower bound on the exact power from Chernoff bounds on both tails.

    The critical value is at most ``ceil(n a)`` where ``KL(a || p0) = log(1/alpha)/n``,
    so the power is at least ``1 - exp(-n KL(a + 1/n || q))`` whenever
    ``a + 1/n < q``. The bound is nondecreasing in ``n``.
    """
    level = math.log(1.0 / alpha) / n
    if level >= -math.log(p0):
        return 0.0
    a = optimize.brentq(lambda x: _kl(x, p0) - level, p0, 1.0, xtol=1e-15)
    # any a above the root keeps the tail bound valid; pad against root error
    b = a + 1e-12 + 1.0 / n
    if b >= q:
        return 0.0
    return max(0.0, 1.0 - math.exp(-n * _kl(b, q)))


def certified_horizon(p0, q, alpha, target_power, cap=HARD_CAP):
    """Smallest n beyond which the Chernoff bound keeps power >= target for good."""
    if chernoff_power_bound(cap, p0, q, alpha) < target_power:
        raise SearchExhaustedError(f"power cannot be certified >= {target_power} below n = {cap}")
    lo, hi = 0, 1
    while chernoff_power_bound(hi, p0, q, alpha) < target_power:
        lo, hi = hi, min(2 * hi, cap)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if chernoff_power_bound(mid, p0, q, alpha) >= target_power:
            hi = mid
        else:
            lo = mid
    return hi


def _first_hit(p0, q, alpha, target_power, cap):
    start, block = 1, 256
    while start <= cap:
        stop = min(cap, start + block - 1)
        ns = np.arange(start, stop + 1)
        hit = np.nonzero(power_array(ns, p0, q, alpha) >= target_power)[0]
        if hit.size:
            return int(ns[hit[0]])
        start, block = stop + 1, block * 2
    raise SearchExhaustedError(f"no n <= {cap} reaches power {target_power}")


def min_sample_size(p0, q, alpha, target_power, mode="stable", cap=HARD_CAP, window=None):
    """Minimum sample size for the exact test to reach ``target_power`` at ``q``.

    ``mode="first-hit"`` returns the smallest n with enough power.
    ``mode="stable"`` returns the smallest n such that every n' >= n has
    enough power. The scan runs exhaustively up to
    ``max(first_hit + window, certified_horizon)``; past the certified horizon
    the Chernoff lower bound guarantees the target. ``window`` defaults to
    ten times the first-hit size.
    """
    _check_prob("p0", p0)
    _check_prob("alpha", alpha)
    _check_prob("target_power", target_power)
    if not p0 < q < 1.0:
        raise InvalidParameterError("need p0 < q < 1")
    if mode not in ("first-hit", "stable"):
        raise InvalidParameterError(f"unknown mode {mode!r}")
    first = _first_hit(p0, q, alpha, target_power, cap)
    if mode == "first-hit":
        return first
    window = 10 * first if window is None else int(window)
    horizon = max(first + window, certified_horizon(p0, q, alpha, target_power, cap))
    horizon = min(horizon, cap)
    ns = np.arange(first, horizon + 1)
    short = np.nonzero(power_array(ns, p0, q, alpha) < target_power)[0]
    if short.size == 0:
        return first
    stable = int(ns[short[-1]]) + 1
    if stable > cap:
        raise SearchExhaustedError(f"power not stable below n = {cap}")
    return stable


def efficiency_pair(n2, p1, p2):
    """Reduced sample size ``floor(p2 / p1 * n2)`` and whether the ratio is integral."""
    if int(n2) != n2 or n2 < 1:
        raise InvalidParameterError("n2 must be a positive integer")
    _check_prob("p1", p1)
    _check_prob("p2", p2)
    if not p1 > p2:
        raise InvalidParameterError("efficiency_pair needs p1 > p2")
    return _reduced_size(n2, p2 / p1)


def _reduced_size(n2, ratio):
    n1 = ratio * n2
    nearest = round(n1)
    exact = abs(n1 - nearest) <= _INT_TOL * max(1.0, n1)
    n1_floor = int(nearest) if exact else int(math.floor(n1))
    if n1_floor == 0:
        raise ZeroSampleError(f"reduced sample size floor({n1:.6g}) is zero")
    return n1_floor, exact
