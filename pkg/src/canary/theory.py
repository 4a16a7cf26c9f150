"""Relative sampling efficiency between two subpopulations, and its lemmas.

Every statement is checked against exact binomial computations: the
efficiency inequality through exact powers, the CDF crossing and quantile
results by exhaustive scans over the integer support.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .dist import BinomialLaw, pmf_sup_bound
from .errors import InvalidParameterError, InvalidScalingError, PreconditionError, ZeroSampleError
from .exact_test import DegenerateTestWarning, _reduced_size, make_plan, min_sample_size, power
from .kernels import binom_logtail

log = logging.getLogger(__name__)

SLACK_TOL = 1e-12
_E = math.e


@dataclass(frozen=True)
class TheoremScenario:
    """Two subpopulations: 1 has the higher baseline prevalence.

    With ``nu`` given and ``q1``/``q2`` omitted, outbreak prevalences are
    ``nu * p``.
    """

    n2: int
    p1: float
    p2: float
    alpha: float
    q1: Optional[float] = None
    q2: Optional[float] = None
    nu: Optional[float] = None

    def __post_init__(self):
        if int(self.n2) != self.n2 or self.n2 < 1:
            raise InvalidParameterError("n2 must be a positive integer")
        if self.nu is not None:
            if not self.nu > 1.0:
                raise InvalidParameterError("outbreak factor nu must exceed 1")
            if self.q1 is None:
                object.__setattr__(self, "q1", self.nu * self.p1)
            if self.q2 is None:
                object.__setattr__(self, "q2", self.nu * self.p2)
        if self.q1 is None or self.q2 is None:
            raise InvalidParameterError("give q1 and q2, or nu")
        for name in ("p1", "p2", "alpha"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InvalidParameterError(f"{name} must lie in (0, 1), got {v!r}")
        for name in ("q1", "q2"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise InvalidParameterError(f"{name} must lie in (0, 1], got {v!r}")
        if self.p1 < self.p2:
            raise InvalidParameterError("subpopulation 1 must have the higher baseline prevalence")


@dataclass(frozen=True)
class ConditionFlags:
    alpha_threshold: float
    alpha_ok: bool
    power2: float
    power_threshold: float
    power_ok: bool
    q2_range_ok: bool
    ratio_ok: bool

    @property
    def failed(self):
        names = ("alpha_ok", "power_ok", "q2_range_ok", "ratio_ok")
        return [n for n in names if not getattr(self, n)]

    @property
    def all_met(self):
        return not self.failed


@dataclass(frozen=True)
class TheoremReport:
    scenario: TheoremScenario
    conditions: ConditionFlags
    n1: float
    n1_floor: int
    n1_integer: bool
    lhs_power: float
    rhs_power: float
    penalty: float
    slack: float
    verdict: bool

    def to_dict(self):
        return asdict(self)


def _quiet_plan(n, p, alpha):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateTestWarning)
        return make_plan(n, p, alpha)


def check_conditions(s: TheoremScenario) -> ConditionFlags:
    a_thr = 0.5 - math.sqrt(1.0 / (2.0 * _E * s.n2 * s.p2 * (1.0 - s.p2)))
    rhs = power(_quiet_plan(s.n2, s.p2, s.alpha), min(s.q2, 1.0)) if s.q2 >= s.p2 else float("nan")
    if s.q2 < 1.0:
        p_thr = 0.5 + math.sqrt(2.0 / (_E * s.n2 * s.q2 * (1.0 - s.q2)))
    else:
        p_thr = math.inf
    return ConditionFlags(
        alpha_threshold=a_thr,
        alpha_ok=s.alpha <= a_thr,
        power2=rhs,
        power_threshold=p_thr,
        power_ok=bool(rhs >= p_thr),
        q2_range_ok=s.p2 <= s.q2 <= 0.5,
        # cross-multiplied with a relative tolerance so nu * p pairs pass exactly
        ratio_ok=s.q1 * s.p2 >= s.p1 * s.q2 * (1.0 - 1e-12),
    )


def verify_theorem(s: TheoremScenario, tol=SLACK_TOL, enforce=True) -> TheoremReport:
    """Exact powers of both tests and the slack of the efficiency inequality.

    The verdict is ``slack >= -tol``; slacks within ``tol`` of zero are
    logged since they sit at the resolution of double precision. With
    ``enforce=False`` the inequality is evaluated even when preconditions
    fail (``report.conditions`` then says which).
    """
    flags = check_conditions(s)
    if enforce and not flags.all_met:
        raise PreconditionError(f"preconditions unmet: {', '.join(flags.failed)}", flags.failed)
    n1 = s.p2 / s.p1 * s.n2
    try:
        n1_floor, n1_integer = _reduced_size(s.n2, s.p2 / s.p1)
    except ZeroSampleError as exc:
        raise PreconditionError(str(exc), ["n1_positive"]) from exc
    lhs = power(_quiet_plan(n1_floor, s.p1, s.alpha), s.q1)
    rhs = flags.power2
    if n1_integer:
        penalty = 0.0
    elif s.q1 >= 1.0:
        penalty = math.inf
    else:
        penalty = math.sqrt(s.q1 / (2.0 * _E * n1_floor * (1.0 - s.q1)))
    slack = lhs - (rhs - penalty)
    if abs(slack) <= tol:
        log.info("near-zero slack %.3g for %s", slack, s)
    return TheoremReport(s, flags, n1, n1_floor, n1_integer, lhs, rhs, penalty, slack, slack >= -tol)


def random_scenarios(count, seed=20240601, n2_max=5000, max_tries=2_000_000):
    """Scenarios drawn at random that satisfy every theorem precondition."""
    rng = np.random.default_rng(seed)
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"only {len(out)} valid scenarios after {max_tries} draws")
        if rng.random() < 0.3:
            ratio = float(rng.choice([2, 4, 5, 10]))
            n2 = int(ratio) * int(rng.integers(1, n2_max // int(ratio) + 1))
        else:
            ratio = float(np.exp(rng.uniform(0.0, math.log(20.0))))
            n2 = int(np.exp(rng.uniform(math.log(10), math.log(n2_max))))
        p2 = float(np.exp(rng.uniform(math.log(1e-3), math.log(0.3))))
        q2 = p2 * float(rng.uniform(1.2, 8.0))
        p1 = ratio * p2
        q1 = q2 * ratio * (1.0 if rng.random() < 0.5 else float(rng.uniform(1.0, 1.5)))
        if q2 > 0.5 or p1 >= 1.0 or q1 > 1.0 or ratio * 1.0 > n2:
            continue
        a_thr = 0.5 - math.sqrt(1.0 / (2.0 * _E * n2 * p2 * (1.0 - p2)))
        if a_thr <= 1e-4:
            continue
        alpha = float(np.exp(rng.uniform(math.log(1e-4), math.log(a_thr))))
        try:
            s = TheoremScenario(n2=n2, p1=p1, p2=p2, alpha=alpha, q1=q1, q2=q2)
        except InvalidParameterError:
            continue
        if s.p2 / s.p1 * s.n2 < 1.0:
            continue
        if check_conditions(s).all_met:
            out.append(s)
    return out


# --------------------------------------------------------------------------
# CDF crossing of Binomial(n, p) against Binomial(n / a, a p)


@dataclass(frozen=True)
class CrossingReport:
    n: int
    a: float
    p: float
    m: int
    upper_range: tuple
    lower_range: tuple
    upper_holds: bool
    lower_holds: bool
    upper_min_gap: float
    lower_min_gap: float
    boundary: bool

    @property
    def holds(self):
        return self.upper_holds and self.lower_holds


def _snap(v):
    r = round(v)
    return float(r) if abs(v - r) <= 1e-9 * max(1.0, abs(v)) else v


def _scaled_size(n, a):
    if a < 1.0:
        raise InvalidScalingError("scaling factor a must be >= 1")
    m = _snap(n / a)
    if m != int(m) or m < 1:
        raise InvalidScalingError(f"n / a = {n / a:.6g} is not a positive integer")
    return int(m)


def lemma1_check(n, a, p) -> CrossingReport:
    """CDF crossing: F_{n,p} < F_{n/a,ap} on [ceil(np), n/a] and > on [0, floor(np - 1)].

    Comparisons are made between log tails (upper tails on the right, lower
    tails on the left) so that tail values far below 1e-308 still compare
    strictly.
    """
    if not 0.0 < p < 1.0:
        raise InvalidParameterError("p must lie in (0, 1)")
    m = _scaled_size(n, a)
    ap = a * p
    if ap >= 1.0:
        raise InvalidScalingError(f"a * p = {ap:.6g} must be below 1")
    mean = _snap(n * p)
    up = (int(math.ceil(mean)), m)
    lo = (0, int(math.floor(mean - 1.0)))
    if m == n:
        xs = np.arange(0, n + 1)
        same = np.array_equal(BinomialLaw(n, p).logpmf(xs), BinomialLaw(m, ap).logpmf(xs))
        return CrossingReport(n, a, p, m, up, lo, same, same, 0.0, 0.0, True)

    xu = np.arange(up[0], up[1] + 1)
    if xu.size:
        ls_a = binom_logtail(xu, n, p, upper=True)
        ls_b = binom_logtail(xu, m, ap, upper=True)
        upper_holds = bool(np.all(ls_a > ls_b))
        upper_gap = float(np.min(np.exp(ls_a) - np.exp(ls_b)))
    else:
        upper_holds, upper_gap = True, math.inf
    xl = np.arange(lo[0], lo[1] + 1)
    if xl.size:
        lc_a = binom_logtail(xl, n, p)
        lc_b = binom_logtail(xl, m, ap)
        lower_holds = bool(np.all(lc_a > lc_b))
        lower_gap = float(np.min(np.exp(lc_a) - np.exp(lc_b)))
    else:
        lower_holds, lower_gap = True, math.inf
    return CrossingReport(n, a, p, m, up, lo, upper_holds, lower_holds, upper_gap, lower_gap, False)


# --------------------------------------------------------------------------
# Technical binomial bounds


@dataclass(frozen=True)
class StepBoundReport:
    n: int
    p: float
    bound: float
    max_gap: float

    @property
    def holds(self):
        return self.max_gap <= self.bound


def lemma2_cdf_step_bound(n, p) -> StepBoundReport:
    """Largest drop F_{n,p}(x) - F_{n+1,p}(x) over x in 0..n against sqrt(p / (2e n (1-p)))."""
    if int(n) != n or n < 1 or not 0.0 < p < 1.0:
        raise InvalidParameterError("need integer n >= 1 and p in (0, 1)")
    bound = math.sqrt(p / (2.0 * _E * n * (1.0 - p)))
    xs = np.arange(0, n + 1)
    gap = BinomialLaw(n, p).cdf(xs) - BinomialLaw(n + 1, p).cdf(xs)
    return StepBoundReport(int(n), float(p), bound, float(np.max(gap)))


def quantile_level_threshold(n, p):
    return 0.5 + math.sqrt(1.0 / (2.0 * _E * n * p * (1.0 - p)))


@dataclass(frozen=True)
class DominanceResult:
    status: str  # "holds", "violated" or "skipped"
    threshold: float
    quantile_n: Optional[int] = None
    quantile_scaled: Optional[int] = None
    reason: str = ""

    def __bool__(self):
        return self.status == "holds"


def lemma2_quantile_dominance(n, a, p, u) -> DominanceResult:
    """Check F^{-1}_{n,p}(u) >= F^{-1}_{n/a,ap}(u); skipped below the level threshold."""
    m = _scaled_size(n, a)
    if a * p >= 1.0:
        raise InvalidScalingError("a * p must be below 1")
    thr = quantile_level_threshold(n, p)
    if not (thr <= u < 1.0):
        return DominanceResult("skipped", thr, reason=f"level {u:.6g} outside [{thr:.6g}, 1)")
    qa = int(BinomialLaw(n, p).quantile(u))
    qb = int(BinomialLaw(m, a * p).quantile(u))
    return DominanceResult("holds" if qa >= qb else "violated", thr, qa, qb)


def lemma2_quantile_dominance_scan(n, a, p):
    """Every distinct quantile pair above the threshold level.

    The quantile functions are step functions that only change at CDF
    values, so checking the threshold, each CDF value and the next float
    above it covers all levels. Returns ``(levels_checked, violations)``.
    """
    m = _scaled_size(n, a)
    if a * p >= 1.0:
        raise InvalidScalingError("a * p must be below 1")
    thr = quantile_level_threshold(n, p)
    if thr >= 1.0:
        return 0, []
    la, lb = BinomialLaw(n, p), BinomialLaw(m, a * p)
    cuts = np.concatenate([la.cdf(np.arange(n + 1)), lb.cdf(np.arange(m + 1))])
    levels = np.concatenate([[thr], cuts, np.nextafter(cuts, 1.0)])
    levels = np.unique(levels[(levels >= thr) & (levels < 1.0)])
    if levels.size == 0:
        return 0, []
    qa = np.atleast_1d(la.quantile(levels))
    qb = np.atleast_1d(lb.quantile(levels))
    bad = np.nonzero(qa < qb)[0]
    return int(levels.size), [(float(levels[i]), int(qa[i]), int(qb[i])) for i in bad]


@dataclass(frozen=True)
class QuasimedianReport:
    n: int
    p: float
    lower_level: float
    upper_level: float
    lower_holds: Optional[bool]
    upper_holds: Optional[bool]
    reasons: list = field(default_factory=list)


def lemma2_quasimedian(n, p) -> QuasimedianReport:
    """Quantiles at 1/2 -+ the pmf-bound offsets bracket n p - 1 and n p."""
    law = BinomialLaw(n, p)
    v = n * p * (1.0 - p)
    lo_u = 0.5 - math.sqrt(2.0 / (_E * v))
    hi_u = 0.5 + math.sqrt(1.0 / (2.0 * _E * v))
    mean = _snap(n * p)
    reasons = []
    lower = upper = None
    if 0.0 < lo_u < 1.0:
        lower = int(law.quantile(lo_u)) <= mean - 1.0
    else:
        reasons.append(f"lower level {lo_u:.6g} outside (0, 1)")
    if 0.0 < hi_u < 1.0:
        upper = int(law.quantile(hi_u)) >= mean
    else:
        reasons.append(f"upper level {hi_u:.6g} outside (0, 1)")
    return QuasimedianReport(int(n), float(p), lo_u, hi_u, lower, upper, reasons)


@dataclass(frozen=True)
class PmfBoundReport:
    n: int
    p: float
    bound: float
    max_pmf: float

    @property
    def holds(self):
        return self.max_pmf <= self.bound


def pmf_bound_check(n, p) -> PmfBoundReport:
    law = BinomialLaw(n, p)
    return PmfBoundReport(int(n), float(p), pmf_sup_bound(n, p), float(np.max(law.pmf(np.arange(n + 1)))))


# --------------------------------------------------------------------------
# Pooling subpopulations


def pooled_prevalence(prevalences, weights):
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or w.sum() <= 0:
        raise InvalidParameterError("weights must be nonnegative with positive total")
    return float(np.dot(w / w.sum(), np.asarray(prevalences, dtype=np.float64)))


def pooled_sample_size_check(p_a, p_b, weight_a, nu, alpha, target_power, mode="stable"):
    """Stable sample sizes of a pooled population and of its higher-prevalence component.

    Returns ``(pooled_n, best_component_n)``; pooling is never more efficient
    under a shared outbreak factor when ``pooled_n >= best_component_n``.
    """
    pooled = pooled_prevalence([p_a, p_b], [weight_a, 1.0 - weight_a])
    best = max(p_a, p_b)
    n_pool = min_sample_size(pooled, nu * pooled, alpha, target_power, mode)
    n_best = min_sample_size(best, nu * best, alpha, target_power, mode)
    return n_pool, n_best


# --------------------------------------------------------------------------
# Grid runner


DEFAULT_SCALINGS = (2, 4, 5, 10)


def default_p_grid(size=25):
    """Probabilities spread log-uniformly over [1e-3, 0.95]."""
    return np.unique(np.round(np.geomspace(1e-3, 0.95, size), 6))


@dataclass
class LemmaSuiteReport:
    n_max: int
    scalings: tuple
    p_values: list
    checks: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)
    examples: dict = field(default_factory=dict)

    def _tally(self, name, ok, example=None):
        self.checks[name] = self.checks.get(name, 0) + 1
        if ok is None:
            self.skipped[name] = self.skipped.get(name, 0) + 1
        elif not ok:
            self.violations[name] = self.violations.get(name, 0) + 1
            if example is not None:
                self.examples.setdefault(name, []).append(example)

    @property
    def total_violations(self):
        return sum(self.violations.values())

    def to_dict(self):
        d = asdict(self)
        d["total_violations"] = self.total_violations
        return d


def run_lemma_suite(n_max=500, scalings=DEFAULT_SCALINGS, p_values=None, n_values=None) -> LemmaSuiteReport:
    """Exhaustive lemma checks over n <= n_max, the scalings and the p grid.

    Crossing and quantile dominance run for every n divisible by the
    scaling with a * p < 1; the step bound, quasi-median brackets and the
    pmf bound run for every (n, p).
    """
    ps = [float(p) for p in (default_p_grid() if p_values is None else p_values)]
    ns = range(1, n_max + 1) if n_values is None else [int(n) for n in n_values]
    rep = LemmaSuiteReport(int(max(ns)), tuple(scalings), ps)
    for n in ns:
        for p in ps:
            step = lemma2_cdf_step_bound(n, p)
            rep._tally("step_bound", step.holds, (n, p, step.max_gap, step.bound))
            pm = pmf_bound_check(n, p)
            rep._tally("pmf_bound", pm.holds, (n, p, pm.max_pmf, pm.bound))
            qm = lemma2_quasimedian(n, p)
            for side, ok in (("quasimedian_lower", qm.lower_holds), ("quasimedian_upper", qm.upper_holds)):
                rep._tally(side, ok, (n, p))
            for a in scalings:
                if n % a or a * p >= 1.0:
                    continue
                cr = lemma1_check(n, a, p)
                rep._tally("crossing", cr.holds, (n, a, p))
                levels, bad = lemma2_quantile_dominance_scan(n, a, p)
                if levels == 0:
                    rep._tally("quantile_dominance", None)
                else:
                    rep._tally("quantile_dominance", not bad, (n, a, p, bad[:3]))
    return rep
