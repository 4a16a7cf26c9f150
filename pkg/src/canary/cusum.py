"""Upper Poisson CUSUM chart: stepping, run lengths, ARL and calibration.

The statistic is ``C_t = max(0, C_{t-1} + D_t - k)`` with ``C_0 = 0`` and an
alarm as soon as ``C_t > h``.
"""

from __future__ import annotations

import csv
import math
from fractions import Fraction
from dataclasses import dataclass, replace
from typing import Iterable, Optional

import numpy as np

from .dist import PoissonLaw
from .errors import (
    DiscretizationError,
    InvalidParameterError,
    UnreachableTargetError,
)
from .exact_test import _reduced_size
from .kernels import cusum_advance

DEFAULT_TARGET_ARL = 370.0
DEFAULT_STATES = 1000


def reference_value(lambda0, lambda1):
    """SPRT reference value (lambda1 - lambda0) / (log lambda1 - log lambda0)."""
    if not 0.0 < lambda0 < lambda1:
        raise InvalidParameterError("reference value needs 0 < lambda0 < lambda1")
    return (lambda1 - lambda0) / (math.log(lambda1) - math.log(lambda0))


@dataclass(frozen=True)
class CusumConfig:
    k: float
    h: float
    lambda0: Optional[float] = None
    lambda1: Optional[float] = None

    def __post_init__(self):
        if not self.k > 0.0:
            raise InvalidParameterError(f"reference value k must be positive, got {self.k!r}")
        if not self.h >= 0.0:
            raise InvalidParameterError(f"control limit h must be nonnegative, got {self.h!r}")

    @classmethod
    def design(cls, lambda0, lambda1, h):
        return cls(reference_value(lambda0, lambda1), h, lambda0, lambda1)

    def with_h(self, h):
        return replace(self, h=float(h))


@dataclass(frozen=True)
class CusumState:
    c: float = 0.0
    t: int = 0
    alarmed: bool = False


@dataclass(frozen=True)
class ArlEstimate:
    mean_run_length: float
    method: str
    ci_halfwidth: float = 0.0
    replications: int = 0
    censored: int = 0

    @property
    def ci(self):
        return (self.mean_run_length - self.ci_halfwidth, self.mean_run_length + self.ci_halfwidth)


def cusum_step(state: CusumState, d, cfg: CusumConfig) -> CusumState:
    if d < 0:
        raise InvalidParameterError("counts must be nonnegative")
    c = max(0.0, state.c + d - cfg.k)
    return CusumState(c, state.t + 1, state.alarmed or c > cfg.h)


def run_length(cfg: CusumConfig, stream: Iterable[int]) -> Optional[int]:
    """First t with C_t > h, or None when the stream ends first."""
    state = CusumState()
    for d in stream:
        state = cusum_step(state, d, cfg)
        if state.alarmed:
            return state.t
    return None


def trace(cfg: CusumConfig, counts):
    """Rows ``(t, d, c, alarmed)`` with ``alarmed`` sticky after the first signal."""
    rows = []
    state = CusumState()
    for d in counts:
        state = cusum_step(state, int(d), cfg)
        rows.append((state.t, int(d), state.c, state.alarmed))
    return rows


def write_trace_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "d", "c", "alarmed"])
        for t, d, c, a in rows:
            w.writerow([t, d, repr(float(c)), int(a)])


# --------------------------------------------------------------------------
# Markov-chain ARL


def _lattice(k, h, states):
    """Rational reference value K / r with r * h + 1 <= ``states`` (r >= 1).

    On the grid of width 1 / r both the integer counts and K / r are exact,
    so C_t never needs rounding; the only approximation is |k - K / r|.
    """
    r_max = max(1, int((states - 1) / h)) if h > 0.0 else states
    frac = Fraction(k).limit_denominator(r_max)
    return frac.numerator, frac.denominator


def _arl_chain(k, h, pmf_fn, states):
    K, r = _lattice(k, h, states)
    top = int(math.floor(r * h + 1e-9))
    n_states = top + 1
    d_max = int(math.floor((top + K) / r)) + 1
    probs = pmf_fn(np.arange(d_max + 1))
    s = np.arange(n_states)
    Q = np.zeros((n_states, n_states))
    for d in range(d_max + 1):
        nxt = np.maximum(0, s + r * d - K)
        inside = nxt <= top
        Q[s[inside], nxt[inside]] += probs[d]
    a = np.linalg.solve(np.eye(n_states) - Q, np.ones(n_states))
    return float(a[0])


def _arl_excursion(k, h, law, rel_tol=1e-13, max_depth=10**7):
    """Zero-start ARL from exact excursions of C_t away from 0.

    After b steps without a reset C_t = a - b k for an integer count sum a,
    so the live states of layer b are the a with 0 < a - b k <= h. Each
    excursion ends in a reset or an alarm; excursions are i.i.d., so the
    ARL is E[excursion length] / P(alarm).
    """
    d_top = int(math.floor(h + k)) + 1  # a count this large alarms from any state
    p = law.pmf(np.arange(d_top))
    p_big = float(law.sf(d_top - 1))
    v = np.ones(1)
    lo = 0  # a value of v[0]
    e_len = p_alarm = 0.0
    b = 0
    while v.size:
        b += 1
        if b > max_depth:
            raise DiscretizationError(f"excursion still alive after {max_depth} steps")
        alive_mass = math.fsum(v)
        w = np.convolve(v, p)
        a = lo + np.arange(w.size)
        c = a - b * k
        reset = c <= 0.0
        alarm = c > h
        gone_alarm = alive_mass * p_big + math.fsum(w[alarm])
        gone = gone_alarm + math.fsum(w[reset])
        e_len += b * gone
        p_alarm += gone_alarm
        keep = np.nonzero(~reset & ~alarm)[0]
        if keep.size == 0:
            break
        v = w[keep[0]:keep[-1] + 1]
        lo = int(a[keep[0]])
        rest = math.fsum(v)
        if p_alarm > 0.0 and rest < rel_tol * p_alarm:
            # remaining excursions would alarm at the latest after a few
            # layers; count them as alarms at the next step
            e_len += (b + 1) * rest
            p_alarm += rest
            break
    if p_alarm <= 0.0:
        return math.inf
    return e_len / p_alarm


def arl_markov(cfg: CusumConfig, lam=None, law=None, states=DEFAULT_STATES, check=True, method="excursion") -> ArlEstimate:
    """Zero-start ARL from an absorbing Markov chain.

    ``method="excursion"`` (default) follows the exact count sums between
    resets, so k and h enter without rounding. ``method="lattice"`` puts
    C_t on at most ``states`` points of width 1 / r, with the reference
    value rounded to the closest K / r; with ``check`` the budget is
    doubled and :class:`DiscretizationError` is raised when the two
    answers differ by more than 0.5% (the finer value is returned).

    Counts follow Poisson(lam) unless another count ``law`` is given.
    """
    if law is None:
        if lam is None or not lam > 0.0:
            raise InvalidParameterError("Poisson mean lam must be positive")
        law = PoissonLaw(lam)
    if method == "excursion":
        return ArlEstimate(_arl_excursion(cfg.k, cfg.h, law), "markov")
    if method != "lattice":
        raise InvalidParameterError(f"unknown Markov method {method!r}")
    arl = _arl_chain(cfg.k, cfg.h, law.pmf, states)
    if check and math.isfinite(arl):
        fine = _arl_chain(cfg.k, cfg.h, law.pmf, 2 * states)
        if abs(fine - arl) > 0.005 * fine:
            raise DiscretizationError(
                f"ARL moved from {arl:.6g} to {fine:.6g} when doubling {states} lattice states"
            )
        arl = fine
    return ArlEstimate(arl, "markov")


# --------------------------------------------------------------------------
# Monte Carlo ARL


def simulate_run_lengths(cfg: CusumConfig, sampler, replications, rng, max_steps=10**6, c0=None):
    """Run lengths of independent charts fed by ``sampler(rng, rows, steps, t0)``.

    ``sampler`` returns an integer ``(len(rows), steps)`` array of counts for
    days ``t0 + 1 .. t0 + steps`` of the replications listed in ``rows``.
    Unfinished charts are censored at ``max_steps`` and reported as ``-1``.
    """
    out = np.full(replications, -1, dtype=np.int64)
    c = np.zeros(replications) if c0 is None else np.array(c0, dtype=np.float64)
    live = np.arange(replications)
    done = 0
    block = 64
    while live.size and done < max_steps:
        steps = min(block, max_steps - done)
        counts = sampler(rng, live, steps, done)
        c_new, alarm = cusum_advance(c[live], counts, cfg.k, cfg.h)
        c[live] = c_new
        hit = alarm >= 0
        out[live[hit]] = done + alarm[hit] + 1
        live = live[~hit]
        done += steps
        block = min(block * 2, 4096)
    return out


def summarize_run_lengths(rl, max_steps, method="monte-carlo"):
    censored = int(np.sum(rl < 0))
    vals = np.where(rl < 0, max_steps, rl).astype(np.float64)
    sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    half = 1.96 * sd / math.sqrt(vals.size)
    return ArlEstimate(float(np.mean(vals)), method, half, int(vals.size), censored)


def poisson_sampler(lam):
    def draw(rng, rows, steps, t0):
        return rng.poisson(lam, size=(len(rows), steps))

    return draw


def arl_monte_carlo(cfg: CusumConfig, lam, replications, seed, max_steps=10**6) -> ArlEstimate:
    """Sample-mean run length over Poisson(lam) streams, with a 95% normal CI.

    Censored runs enter the mean at ``max_steps``.
    """
    if replications < 1:
        raise InvalidParameterError("need at least one replication")
    rng = np.random.default_rng(seed)
    rl = simulate_run_lengths(cfg, poisson_sampler(lam), replications, rng, max_steps)
    return summarize_run_lengths(rl, max_steps)


# --------------------------------------------------------------------------
# Calibration


def calibrate_h(
    lambda0, k, target_arl=DEFAULT_TARGET_ARL, step=0.01, h_max=None, states=DEFAULT_STATES, law=None, method="excursion"
):
    """Smallest h on the ``step`` grid whose Markov in-control ARL reaches ``target_arl``.

    The ARL is taken as nondecreasing in h: the grid is searched by doubling
    and then bisection. With ``method="lattice"`` the accepted value is
    re-checked with a doubled lattice.
    """
    if not target_arl > 1.0:
        raise InvalidParameterError("target ARL must exceed 1")
    if law is None:
        law = PoissonLaw(lambda0)
    if h_max is None:
        h_max = 1000.0 * (k + 1.0)
    top = int(math.ceil(h_max / step))

    def arl(i):
        if method == "lattice":
            return _arl_chain(k, i * step, law.pmf, states)
        return _arl_excursion(k, i * step, law)

    if arl(0) >= target_arl:
        return 0.0
    lo, hi = 0, 1
    while arl(hi) < target_arl:
        if hi >= top:
            raise UnreachableTargetError(f"ARL {target_arl} not reached for h <= {h_max}")
        lo, hi = hi, min(2 * hi, top)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if arl(mid) >= target_arl:
            hi = mid
        else:
            lo = mid
    h = round(hi * step, 10)
    if method == "lattice":
        arl_markov(CusumConfig(k, h), law=law, states=states, check=True, method="lattice")
    return h


# --------------------------------------------------------------------------
# Stochastic ordering and sample sizing


def dominance_check(lambda_a, lambda_b, tail=1e-12, tol=0.0):
    """True when Poisson(lambda_b) stochastically dominates Poisson(lambda_a).

    Checked pointwise, ``cdf_a(x) >= cdf_b(x) - tol`` on the support that
    holds all but ``tail`` of both laws.
    """
    if not (lambda_a > 0.0 and lambda_b > 0.0):
        raise InvalidParameterError("Poisson means must be positive")
    a, b = PoissonLaw(lambda_a), PoissonLaw(lambda_b)
    top = max(a.support_max(tail), b.support_max(tail))
    xs = np.arange(top + 1)
    return bool(np.all(a.cdf(xs) >= b.cdf(xs) - tol))


def efficiency_pair_dynamic(n2, lambda1, lambda2):
    """Reduced monitoring sample ``floor(lambda2 / lambda1 * n2)``."""
    if int(n2) != n2 or n2 < 1:
        raise InvalidParameterError("n2 must be a positive integer")
    if not lambda1 >= lambda2 > 0.0:
        raise InvalidParameterError("need lambda1 >= lambda2 > 0")
    return _reduced_size(n2, lambda2 / lambda1)[0]
