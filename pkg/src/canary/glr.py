"""Windowed one-sided GLR chart for negative-binomial (or Poisson) counts.

For a candidate change at day s the post-change mean is profiled out with
the dispersion held at its baseline value:

    GLR_t = max_{t - W < s <= t} sup_{mu >= mu0} sum_{i=s}^{t} log f(x_i; mu) / f(x_i; mu0)

With the dispersion fixed the per-window log-likelihood is concave in mu and
its maximizer is the window mean, so the constrained sup sits at
``max(window mean, mu0)``. The chart alarms on the first day with GLR_t > c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidParameterError
from .kernels import glr_paths

DEFAULT_WINDOW = 52


@dataclass(frozen=True)
class GlrConfig:
    baseline_mean: float
    dispersion: float = math.inf
    threshold: float = math.inf
    max_window: int = DEFAULT_WINDOW

    def __post_init__(self):
        if not (self.baseline_mean > 0.0 and math.isfinite(self.baseline_mean)):
            raise InvalidParameterError(f"baseline mean must be positive, got {self.baseline_mean!r}")
        if not self.dispersion > 0.0:
            raise InvalidParameterError(f"dispersion must be positive (inf for Poisson), got {self.dispersion!r}")
        if not self.threshold > 0.0:
            raise InvalidParameterError(f"threshold must be positive, got {self.threshold!r}")
        if int(self.max_window) != self.max_window or self.max_window < 1:
            raise InvalidParameterError("max_window must be a positive integer")

    @property
    def poisson(self):
        return math.isinf(self.dispersion)


@dataclass(frozen=True)
class GlrTrace:
    statistics: np.ndarray
    alarm_time: Optional[int]
    threshold: float

    @property
    def alarmed(self):
        return self.statistics > self.threshold


def _counts(series):
    x = np.asarray(series)
    if x.ndim != 1:
        raise InvalidParameterError("series must be one-dimensional")
    if x.size and (np.any(x < 0) or np.any(x != np.floor(x))):
        raise InvalidParameterError("counts must be nonnegative integers")
    return x.astype(np.int64)


def estimate_baseline(series):
    """Sample mean and method-of-moments dispersion ``mean**2 / (var - mean)``.

    The dispersion is ``inf`` (Poisson) when the sample variance does not
    exceed the mean.
    """
    x = _counts(series)
    if x.size < 2:
        raise InvalidParameterError("baseline estimation needs at least two observations")
    mean = float(np.mean(x))
    if mean <= 0.0:
        raise InvalidParameterError("baseline window has no cases")
    var = float(np.var(x, ddof=1))
    if var <= mean:
        return mean, math.inf
    return mean, mean * mean / (var - mean)


def glr_path(series, cfg: GlrConfig):
    x = _counts(series)
    if x.size == 0:
        return np.zeros(0)
    return glr_paths(x, cfg.baseline_mean, cfg.dispersion, cfg.max_window)[0]


def glr_statistic(series, cfg: GlrConfig, t):
    """GLR statistic on day ``t`` (1-based) using ``series[:t]``."""
    x = _counts(series)
    if int(t) != t or not 1 <= t <= x.size:
        raise InvalidParameterError(f"day t must lie in 1..{x.size}, got {t!r}")
    t = int(t)
    tail = x[max(0, t - cfg.max_window):t]
    return float(glr_paths(tail, cfg.baseline_mean, cfg.dispersion, cfg.max_window)[0, -1])


def monitor(series, cfg: GlrConfig) -> GlrTrace:
    stats = glr_path(series, cfg)
    hits = np.nonzero(stats > cfg.threshold)[0]
    alarm = int(hits[0]) + 1 if hits.size else None
    return GlrTrace(stats, alarm, cfg.threshold)


def negbin_sampler(mu, dispersion):
    """Count sampler ``draw(rng, shape)`` for NegBin(mu, dispersion); Poisson if infinite."""
    if math.isinf(dispersion):
        return lambda rng, shape: rng.poisson(mu, size=shape)
    prob = dispersion / (dispersion + mu)
    return lambda rng, shape: rng.negative_binomial(dispersion, prob, size=shape)


def run_lengths(stat_paths, threshold):
    """First day (1-based) with statistic > threshold per row; -1 if none."""
    hit = stat_paths > threshold
    first = np.argmax(hit, axis=1)
    return np.where(hit.any(axis=1), first + 1, -1)


@dataclass(frozen=True)
class GlrCalibration:
    threshold: float
    arl: float
    ci_halfwidth: float
    replications: int
    horizon: int
    censored: int


def _mean_rl(running_max, c, horizon):
    # running_max rows are nondecreasing, so the alarm day is a searchsorted
    idx = np.array([np.searchsorted(row, c, side="right") for row in running_max])
    rl = np.where(idx < horizon, idx + 1, horizon)
    return rl


def calibrate_threshold(
    baseline_mean,
    dispersion=math.inf,
    target_arl=370.0,
    max_window=DEFAULT_WINDOW,
    replications=2000,
    seed=0,
    horizon=None,
    rel_tol=1e-4,
) -> GlrCalibration:
    """Threshold whose simulated in-control ARL first reaches ``target_arl``.

    In-control streams are simulated once over ``horizon`` days (default ten
    times the target); unfinished runs count as ``horizon``, which biases the
    ARL estimate down and the threshold up.
    """
    if not target_arl > 1.0:
        raise InvalidParameterError("target ARL must exceed 1")
    cfg = GlrConfig(baseline_mean, dispersion, math.inf, max_window)
    horizon = int(horizon or math.ceil(10 * target_arl))
    rng = np.random.default_rng(seed)
    draw = negbin_sampler(baseline_mean, dispersion)
    maxes = []
    # rows in blocks to keep the statistic matrix small
    for start in range(0, replications, 256):
        rows = min(256, replications - start)
        paths = glr_paths(draw(rng, (rows, horizon)), cfg.baseline_mean, cfg.dispersion, cfg.max_window)
        maxes.append(np.maximum.accumulate(paths, axis=1))
    running_max = np.concatenate(maxes)

    lo, hi = 0.0, float(running_max[:, -1].max())
    if _mean_rl(running_max, lo, horizon).mean() >= target_arl:
        hi = lo
    while hi - lo > rel_tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if _mean_rl(running_max, mid, horizon).mean() >= target_arl:
            hi = mid
        else:
            lo = mid
    rl = _mean_rl(running_max, hi, horizon)
    if rl.mean() < target_arl:
        raise InvalidParameterError(f"horizon {horizon} too short to reach ARL {target_arl}")
    half = 1.96 * float(np.std(rl, ddof=1)) / math.sqrt(rl.size) if rl.size > 1 else 0.0
    censored = int(np.sum(running_max[:, -1] <= hi))
    return GlrCalibration(hi, float(rl.mean()), half, int(rl.size), horizon, censored)


def simulate_run_lengths(cfg: GlrConfig, sampler, replications, rng, max_steps=10**5):
    """Chunked GLR run lengths; ``sampler(rng, rows, steps, t0)`` as for the CUSUM.

    The last ``max_window`` counts of each live chart are carried into the
    next chunk, so the statistic is the same as on one long stream.
    """
    W = cfg.max_window
    out = np.full(replications, -1, dtype=np.int64)
    hist = np.zeros((replications, 0), dtype=np.int64)
    live = np.arange(replications)
    done = 0
    block = 64
    while live.size and done < max_steps:
        steps = min(block, max_steps - done)
        new = np.asarray(sampler(rng, live, steps, done), dtype=np.int64)
        counts = np.concatenate([hist[live], new], axis=1) if hist.shape[1] else new
        paths = glr_paths(counts, cfg.baseline_mean, cfg.dispersion, W)[:, -steps:]
        rl = run_lengths(paths, cfg.threshold)
        hit = rl > 0
        out[live[hit]] = done + rl[hit]
        keep = min(W, counts.shape[1])
        tail = np.zeros((replications, keep), dtype=np.int64)
        tail[live] = counts[:, -keep:]
        hist = tail
        live = live[~hit]
        done += steps
        block = min(block * 2, 4096)
    return out


def glr_arl_monte_carlo(cfg: GlrConfig, mu, replications, seed, max_steps=10**5):
    """Mean run length with 95% CI under NegBin(mu, cfg.dispersion) counts."""
    rng = np.random.default_rng(seed)
    draw = negbin_sampler(mu, cfg.dispersion)
    rl = simulate_run_lengths(cfg, lambda g, rows, steps, t0: draw(g, (len(rows), steps)), replications, rng, max_steps)
    horizon = max_steps
    censored = int(np.sum(rl < 0))
    vals = np.where(rl < 0, horizon, rl).astype(np.float64)
    half = 1.96 * float(np.std(vals, ddof=1)) / math.sqrt(vals.size) if vals.size > 1 else 0.0
    return float(vals.mean()), half, censored
