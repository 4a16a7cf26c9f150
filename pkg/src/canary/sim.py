"""Generative model for heterogeneous subpopulations and detection-delay experiments.

Each subject i of subpopulation j falls ill on a given day with probability
``omega[i]``, independently across subjects and days. A uniform sample of n
subjects is drawn once and kept for the whole horizon; the daily count is the
number of sampled subjects that fall ill. An outbreak multiplies every risk by
``nu`` (capped at 1) from its start day onward.

Draws are exact: sampled subjects are grouped by identical risk and each
group contributes a binomial count.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import cusum as _cusum
from . import glr as _glr
from .dist import BinomialLaw, PoissonLaw
from .errors import InvalidParameterError, SampleTooLargeError, TooLargeForExactError
from .exact_test import make_plan
from .kernels import bernoulli_poisson_diff

LECAM_MAX_N = 5000


@dataclass(frozen=True, eq=False)
class SubpopSpec:
    risks: np.ndarray
    nu: float = 1.0
    label: str = ""

    def __post_init__(self):
        r = np.asarray(self.risks, dtype=np.float64)
        if r.ndim != 1 or r.size == 0:
            raise InvalidParameterError("risks must be a non-empty 1-d array")
        if np.any(r < 0.0) or np.any(r >= 1.0):
            raise InvalidParameterError("risks must lie in [0, 1)")
        if not self.nu >= 1.0:
            raise InvalidParameterError(f"outbreak factor must be >= 1, got {self.nu!r}")
        r.setflags(write=False)
        object.__setattr__(self, "risks", r)

    @property
    def m(self):
        return int(self.risks.size)

    @property
    def mean_rate(self):
        return float(np.mean(self.risks))

    def outbreak_risks(self):
        return np.minimum(self.nu * self.risks, 1.0)

    def with_nu(self, nu):
        return SubpopSpec(self.risks, nu, self.label)

    # factories -----------------------------------------------------------

    @classmethod
    def homogeneous(cls, m, omega, nu=1.0, label=""):
        return cls(np.full(int(m), float(omega)), nu, label)

    @classmethod
    def two_point(cls, m, mean, ratio=3.0, high_share=0.2, nu=1.0, label=""):
        """A ``high_share`` fraction at ``ratio`` times the risk of the rest, overall mean ``mean``.

        The number of high-risk subjects is rounded, and the low risk is set
        so that the population mean equals ``mean`` exactly.
        """
        m = int(m)
        n_hi = int(round(high_share * m))
        if not 0 < n_hi < m:
            raise InvalidParameterError("high_share leaves an empty group")
        lo = mean * m / (n_hi * ratio + (m - n_hi))
        risks = np.concatenate([np.full(n_hi, ratio * lo), np.full(m - n_hi, lo)])
        return cls(risks, nu, label)

    @classmethod
    def beta(cls, m, mean, concentration=50.0, nu=1.0, seed=0, label=""):
        """Risks drawn from Beta(mean * c, (1 - mean) * c); the realized mean is kept as drawn."""
        rng = np.random.default_rng(seed)
        a, b = mean * concentration, (1.0 - mean) * concentration
        risks = np.minimum(rng.beta(a, b, size=int(m)), np.nextafter(1.0, 0.0))
        return cls(risks, nu, label)


@dataclass(frozen=True, eq=False)
class SampleHandle:
    subpop: str
    indices: np.ndarray
    n: int


@dataclass(frozen=True, eq=False)
class CaseStream:
    counts: np.ndarray
    outbreak_start: Optional[int] = None

    def __len__(self):
        return int(self.counts.size)


def draw_sample(spec: SubpopSpec, n, seed) -> SampleHandle:
    """Uniform sample of ``n`` subjects without replacement (sorted indices)."""
    if int(n) != n or n < 1:
        raise InvalidParameterError("sample size must be a positive integer")
    if n > spec.m:
        raise SampleTooLargeError(f"cannot sample {n} subjects from {spec.m}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(spec.m, size=int(n), replace=False))
    idx.setflags(write=False)
    return SampleHandle(spec.label, idx, int(n))


def _groups(risks):
    values, counts = np.unique(risks, return_counts=True)
    return values, counts


def _draw_counts(rng, group_counts, values, steps):
    """(rows, steps) daily totals; ``group_counts`` is (rows, V)."""
    rows, V = group_counts.shape
    if V == 1:
        return rng.binomial(group_counts[:, :1], values[0], size=(rows, steps))
    draws = rng.binomial(group_counts[:, None, :], values[None, None, :], size=(rows, steps, V))
    return draws.sum(axis=2)


def simulate_stream(handle: SampleHandle, spec: SubpopSpec, horizon, outbreak_start=None, seed=0) -> CaseStream:
    """Daily counts for days 1..horizon; risks scaled by ``nu`` from ``outbreak_start`` on."""
    if int(horizon) != horizon or horizon < 1:
        raise InvalidParameterError("horizon must be a positive integer")
    rng = np.random.default_rng(seed)
    sampled = spec.risks[handle.indices]
    base_v, base_c = _groups(sampled)
    start = horizon + 1 if outbreak_start is None else max(1, int(outbreak_start))
    pre = min(horizon, start - 1)
    parts = []
    if pre > 0:
        parts.append(_draw_counts(rng, base_c[None, :], base_v, pre)[0])
    if horizon - pre > 0:
        hot_v, hot_c = _groups(np.minimum(spec.nu * sampled, 1.0))
        parts.append(_draw_counts(rng, hot_c[None, :], hot_v, horizon - pre)[0])
    counts = np.concatenate(parts).astype(np.int64)
    return CaseStream(counts, outbreak_start)


# --------------------------------------------------------------------------
# Le Cam gap


@dataclass(frozen=True)
class LeCamReport:
    gap: float
    second_stage_gap: float
    bound: float
    rate_sum: float
    n: int

    def to_dict(self):
        return asdict(self)


def _tv_against_poisson(pmf, mu):
    # pmf lives on 0..n; Poisson mass beyond n counts fully
    n = pmf.size - 1
    if mu == 0.0:
        ref = np.zeros_like(pmf)
        ref[0] = 1.0
        beyond = 0.0
    else:
        law = PoissonLaw(mu)
        ref = law.pmf(np.arange(n + 1))
        beyond = float(law.sf(n))
    return min(1.0, 0.5 * (math.fsum(np.abs(pmf - ref)) + beyond))


def lecam_gap(handle: SampleHandle, spec: SubpopSpec) -> LeCamReport:
    """Exact TV distance between the Bernoulli sum and Poisson(sum of sampled risks).

    Also reports the gap to Poisson(n * population mean rate), i.e. with the
    sample's total rate replaced by its expectation. ``bound`` is the
    Le Cam bound ``sum(omega_i**2)``.
    """
    if handle.n > LECAM_MAX_N:
        raise TooLargeForExactError(f"exact convolution limited to n <= {LECAM_MAX_N}, got {handle.n}")
    w = spec.risks[handle.indices]
    pmf, diff = bernoulli_poisson_diff(w)
    rate = math.fsum(w)
    # the difference is tracked directly; subtracting two pmfs near 1 would
    # leave ~1e-16 noise, far above sum(omega**2) when the risks are tiny
    beyond = float(PoissonLaw(rate).sf(handle.n)) if rate > 0 else 0.0
    gap = min(1.0, 0.5 * (math.fsum(np.abs(diff)) + beyond))
    gap2 = _tv_against_poisson(pmf, handle.n * spec.mean_rate)
    return LeCamReport(gap, gap2, math.fsum(w * w), rate, handle.n)


# --------------------------------------------------------------------------
# Detection-delay experiments


@dataclass(frozen=True)
class DelayDesign:
    n2: int
    nu: float = 1.5
    target_arl: float = _cusum.DEFAULT_TARGET_ARL
    outbreak_start: int = 1
    max_steps: int = 20_000
    glr_window: int = _glr.DEFAULT_WINDOW
    glr_calibration_reps: int = 2000
    design_shift: float = 1.5  # CUSUM k is tuned to detect mean * design_shift


@dataclass(frozen=True)
class DelaySummary:
    mean: float
    ci_halfwidth: float
    replications: int
    censored: int
    false_alarms: int

    @property
    def ci(self):
        return (self.mean - self.ci_halfwidth, self.mean + self.ci_halfwidth)


@dataclass(frozen=True)
class DelayReport:
    chart: str
    n1: int
    n2: int
    lambda1: float
    lambda2: float
    nu: float
    chart_params: dict
    delay1: DelaySummary
    delay2: DelaySummary
    seed: int
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _group_matrix(spec, n, reps, rng):
    """Per-replication counts of sampled subjects in each distinct risk value."""
    values, _ = _groups(spec.risks)
    code = np.searchsorted(values, spec.risks)
    G = np.zeros((reps, values.size), dtype=np.int64)
    for r in range(reps):
        idx = rng.choice(spec.m, size=n, replace=False)
        G[r] = np.bincount(code[idx], minlength=values.size)
    return values, G


def population_sampler(spec: SubpopSpec, n, reps, rng, outbreak_start=None):
    """Sampler ``(rng, rows, steps, t0)`` for ``reps`` charts, each with its own fixed sample.

    Returns the sampler and the per-replication sampled rate sums.
    """
    values, G = _group_matrix(spec, n, reps, rng)
    hot = np.minimum(spec.nu * values, 1.0)
    start = math.inf if outbreak_start is None else int(outbreak_start)

    def draw(g, rows, steps, t0):
        days = t0 + 1 + np.arange(steps)
        pre = int(np.sum(days < start))
        out = np.zeros((len(rows), steps), dtype=np.int64)
        if pre:
            out[:, :pre] = _draw_counts(g, G[rows], values, pre)
        if steps - pre:
            out[:, pre:] = _draw_counts(g, G[rows], hot, steps - pre)
        return out

    return draw, G @ values


def _summarize(rl, start, max_steps):
    false = int(np.sum((rl > 0) & (rl < start)))
    valid = rl[(rl < 0) | (rl >= start)]
    censored = int(np.sum(valid < 0))
    delays = np.where(valid < 0, max_steps - start + 1, valid - start + 1).astype(np.float64)
    if delays.size == 0:
        return DelaySummary(math.nan, math.nan, 0, censored, false)
    half = 1.96 * float(np.std(delays, ddof=1)) / math.sqrt(delays.size) if delays.size > 1 else 0.0
    return DelaySummary(float(delays.mean()), half, int(delays.size), censored, false)


def detection_delay_experiment(spec1: SubpopSpec, spec2: SubpopSpec, chart, design: DelayDesign, replications, seed) -> DelayReport:
    """Mean detection delay of the small-sample chart (1) and the large-sample chart (2).

    The sample sizes are ``n1 = floor(lambda2 / lambda1 * n2)`` and ``n2``.
    Both subpopulations get the outbreak factor ``design.nu`` from day
    ``design.outbreak_start``. Delay is ``alarm - start + 1``; alarms before
    the start are counted as false alarms and left out of the mean.

    ``chart="cusum"``: one shared (k, h) designed for the chart-2 in-control
    mean ``n2 * lambda2``; since ``n1 * lambda1 <= n2 * lambda2`` that limit
    is conservative for chart 1. ``chart="glr"``: Poisson GLR charts with
    baselines ``n_j * lambda_j``, each threshold calibrated by simulation.
    """
    if chart not in ("cusum", "glr"):
        raise InvalidParameterError(f"unknown chart {chart!r}")
    lam1, lam2 = spec1.mean_rate, spec2.mean_rate
    if not lam1 >= lam2 > 0.0:
        raise InvalidParameterError("need lambda1 >= lambda2 > 0")
    n2 = int(design.n2)
    n1 = _cusum.efficiency_pair_dynamic(n2, lam1, lam2)
    if n2 > spec2.m or n1 > spec1.m:
        raise SampleTooLargeError("sample size exceeds a subpopulation")
    spec1, spec2 = spec1.with_nu(design.nu), spec2.with_nu(design.nu)
    ss = np.random.SeedSequence(seed)
    s_samp1, s_samp2, s_run1, s_run2, s_cal = ss.spawn(5)
    start = int(design.outbreak_start)
    draw1, rate1 = population_sampler(spec1, n1, replications, np.random.default_rng(s_samp1), start)
    draw2, rate2 = population_sampler(spec2, n2, replications, np.random.default_rng(s_samp2), start)

    mu2 = n2 * lam2
    if chart == "cusum":
        shift = design.design_shift
        cfg = _cusum.CusumConfig.design(mu2, shift * mu2, 0.0)
        cfg = cfg.with_h(_cusum.calibrate_h(mu2, cfg.k, design.target_arl))
        params = {"k": cfg.k, "h": cfg.h, "design_mean": mu2, "design_shift": shift}
        rl1 = _cusum.simulate_run_lengths(cfg, draw1, replications, np.random.default_rng(s_run1), design.max_steps)
        rl2 = _cusum.simulate_run_lengths(cfg, draw2, replications, np.random.default_rng(s_run2), design.max_steps)
    else:
        seeds = s_cal.generate_state(2)
        cals = []
        for mu, sd in ((n1 * lam1, seeds[0]), (mu2, seeds[1])):
            cal = _glr.calibrate_threshold(
                mu, math.inf, design.target_arl, design.glr_window, design.glr_calibration_reps, int(sd)
            )
            cals.append(_glr.GlrConfig(mu, math.inf, cal.threshold, design.glr_window))
        params = {
            "baseline1": cals[0].baseline_mean,
            "threshold1": cals[0].threshold,
            "baseline2": cals[1].baseline_mean,
            "threshold2": cals[1].threshold,
            "max_window": design.glr_window,
        }
        rl1 = _glr.simulate_run_lengths(cals[0], draw1, replications, np.random.default_rng(s_run1), design.max_steps)
        rl2 = _glr.simulate_run_lengths(cals[1], draw2, replications, np.random.default_rng(s_run2), design.max_steps)

    extra = {
        "mean_sampled_rate1": float(np.mean(rate1)),
        "mean_sampled_rate2": float(np.mean(rate2)),
    }
    return DelayReport(
        chart, n1, n2, lam1, lam2, float(design.nu), params,
        _summarize(rl1, start, design.max_steps), _summarize(rl2, start, design.max_steps),
        int(seed), extra,
    )


def in_control_arl(spec: SubpopSpec, n, cfg, replications, seed, max_steps=10**5):
    """Monte Carlo in-control ARL of a CUSUM or GLR chart fed by fixed samples of ``spec``."""
    ss = np.random.SeedSequence(seed)
    s_samp, s_run = ss.spawn(2)
    draw, _ = population_sampler(spec.with_nu(1.0), n, replications, np.random.default_rng(s_samp))
    rng = np.random.default_rng(s_run)
    if isinstance(cfg, _cusum.CusumConfig):
        rl = _cusum.simulate_run_lengths(cfg, draw, replications, rng, max_steps)
    else:
        rl = _glr.simulate_run_lengths(cfg, draw, replications, rng, max_steps)
    return _cusum.summarize_run_lengths(rl, max_steps)


# --------------------------------------------------------------------------
# Static finite-population harness


@dataclass(frozen=True)
class StaticHarnessReport:
    n: int
    m: int
    prevalence: float
    critical_value: int
    power_binomial: float
    rejection_with_replacement: float
    rejection_without_replacement: float
    replications: int


def static_population(m, p, seed):
    """0/1 infection indicators with exactly ``round(p * m)`` positives at random places."""
    rng = np.random.default_rng(seed)
    x = np.zeros(int(m), dtype=np.int8)
    x[rng.choice(int(m), size=int(round(p * m)), replace=False)] = 1
    return x


def static_harness(population, n, p0, alpha, replications, seed):
    """Rejection rates of the exact test when sampling a finite 0/1 population.

    Sampling with replacement reproduces the Binomial(n, prevalence) model
    the test assumes; without replacement the count is hypergeometric and
    less variable, so the two rates separate once n is a sizeable share of m.
    """
    x = np.asarray(population)
    m = x.size
    K = int(x.sum())
    prev = K / m
    if n > m:
        raise SampleTooLargeError(f"cannot sample {n} subjects from {m}")
    plan = make_plan(n, p0, alpha)
    rng = np.random.default_rng(seed)
    with_r = rng.binomial(n, prev, size=replications)
    without = rng.hypergeometric(K, m - K, n, size=replications)
    exact = float(BinomialLaw(n, prev).sf(plan.critical_value)) if 0.0 < prev < 1.0 else float(prev >= 1.0)
    return StaticHarnessReport(
        n, m, prev, plan.critical_value, exact,
        float(np.mean(with_r > plan.critical_value)),
        float(np.mean(without > plan.critical_value)),
        int(replications),
    )


# --------------------------------------------------------------------------
# Two-stratum negative-binomial GLR comparison


@dataclass(frozen=True)
class StratumDelay:
    baseline: float
    threshold: float
    calibrated_arl: float
    delay: DelaySummary


@dataclass(frozen=True)
class CaseStudyReport:
    high: StratumDelay
    low: StratumDelay
    dispersion: float
    nu: float
    onset: int
    z: float
    p_high_earlier: float
    seed: int

    def to_dict(self):
        return asdict(self)


def negbin_case_study(
    baselines=(19.5, 15.7),
    dispersion=10.0,
    nu=1.5,
    onset=36,
    replications=500,
    seed=0,
    target_arl=_cusum.DEFAULT_TARGET_ARL,
    max_window=_glr.DEFAULT_WINDOW,
    calibration_reps=2000,
    max_steps=20_000,
):
    """GLR detection delays for two strata with a common multiplicative outbreak.

    Each stratum gets its own threshold, calibrated under its own in-control
    NegBin(baseline, dispersion) law. From day ``onset`` on both means are
    multiplied by ``nu``. ``z`` is the Welch statistic of (high - low) mean
    delay and ``p_high_earlier`` the one-sided p-value for "the high-baseline
    stratum alarms earlier on average".
    """
    hi_mu, lo_mu = baselines
    if not hi_mu > lo_mu > 0.0:
        raise InvalidParameterError("baselines must be given as (high, low) with high > low > 0")
    ss = np.random.SeedSequence(seed)
    cal_seeds = ss.spawn(2)
    run_seeds = ss.spawn(2)
    out = []
    for mu, cs, rs in zip((hi_mu, lo_mu), cal_seeds, run_seeds):
        cal = _glr.calibrate_threshold(
            mu, dispersion, target_arl, max_window, calibration_reps, int(cs.generate_state(1)[0])
        )
        cfg = _glr.GlrConfig(mu, dispersion, cal.threshold, max_window)
        before = _glr.negbin_sampler(mu, dispersion)
        after = _glr.negbin_sampler(nu * mu, dispersion)

        def draw(g, rows, steps, t0, before=before, after=after):
            days = t0 + 1 + np.arange(steps)
            pre = int(np.sum(days < onset))
            parts = []
            if pre:
                parts.append(before(g, (len(rows), pre)))
            if steps - pre:
                parts.append(after(g, (len(rows), steps - pre)))
            return np.concatenate(parts, axis=1)

        rl = _glr.simulate_run_lengths(cfg, draw, replications, np.random.default_rng(rs), max_steps)
        out.append(StratumDelay(mu, cal.threshold, cal.arl, _summarize(rl, onset, max_steps)))
    hi, lo = out
    se = math.hypot(hi.delay.ci_halfwidth, lo.delay.ci_halfwidth) / 1.96
    z = (hi.delay.mean - lo.delay.mean) / se if se > 0 else 0.0
    p = 0.5 * math.erfc(-z / math.sqrt(2.0))
    return CaseStudyReport(hi, lo, float(dispersion), float(nu), int(onset), z, p, int(seed))
