"""Hot inner loops, each in a numba and a pure-numpy flavour.

The public names (``binom_logtail``, ``cusum_advance``, ``glr_paths``,
``bernoulli_convolve``, ``bernoulli_poisson_diff``) are bound to one flavour
at import time according to :data:`canary._accel.USE_NUMBA`. Both flavours
are importable regardless so tests and the benchmark can compare them.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, optional_njit
from ._loader import LN_2PI, binom_raw_logpmf

# terms below this fraction of the running sum no longer change a float64 total
_SUM_EPS = 1e-17
# largest (window sum, window length) lookup table built by glr_paths
_TABLE_LIMIT = 4_000_000

# --------------------------------------------------------------------------
# Binomial tails


@optional_njit(cache=True)
def _stirlerr_s(n):
    if n <= 0.0:
        return 0.0
    if n <= 15.0:
        return math.lgamma(n + 1.0) - (n + 0.5) * math.log(n) + n - 0.5 * LN_2PI
    nn = n * n
    return (1.0 / 12 - (1.0 / 360 - (1.0 / 1260 - (1.0 / 1680 - (1.0 / 1188) / nn) / nn) / nn) / nn) / n


@optional_njit(cache=True)
def _bd0_s(x, m):
    if abs(x - m) < 0.1 * (x + m):
        v = (x - m) / (x + m)
        s = (x - m) * v
        ej = 2.0 * x * v
        v2 = v * v
        for j in range(1, 1000):
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                break
            s = s1
        return s
    if x == 0.0:
        return m
    return x * math.log(x / m) + m - x


@optional_njit(cache=True)
def _binom_logpmf_s(x, n, p, q):
    if x == 0.0:
        return n * math.log(q)
    if x == n:
        return n * math.log(p)
    lc = _stirlerr_s(n) - _stirlerr_s(x) - _stirlerr_s(n - x) - _bd0_s(x, n * p) - _bd0_s(n - x, n * q)
    lf = LN_2PI + math.log(x) + math.log1p(-x / n)
    return lc - 0.5 * lf


@optional_njit(cache=True)
def _log_partial_sum(start, n, p, q, down):
    # log of sum_{j <= start} f(j) when down, else sum_{j >= start} f(j);
    # terms are generated by the pmf ratio and summed relative to f(start).
    lt0 = _binom_logpmf_s(start, n, p, q)
    t = 1.0
    s = 1.0
    j = start
    if down:
        while j > 0:
            t *= j / (n - j + 1.0) * (q / p)
            j -= 1.0
            s += t
            if t < s * _SUM_EPS:
                break
    else:
        while j < n:
            t *= (n - j) / (j + 1.0) * (p / q)
            j += 1.0
            s += t
            if t < s * _SUM_EPS:
                break
    return lt0 + math.log(s)


@optional_njit(cache=True)
def _binom_logtail_s(k, n, p, upper):
    if k < 0.0:
        return 0.0 if upper else -np.inf
    if k >= n:
        return -np.inf if upper else 0.0
    q = 1.0 - p
    mode = math.floor((n + 1.0) * p)
    if k < mode:
        lcdf = _log_partial_sum(k, n, p, q, True)
        if upper:
            return math.log1p(-math.exp(lcdf))
        return lcdf
    lsf = _log_partial_sum(k + 1.0, n, p, q, False)
    if upper:
        return lsf
    return math.log1p(-math.exp(lsf))


@optional_njit(cache=True)
def _binom_logtail_nb(k, n, p, upper):
    out = np.empty(k.shape[0])
    for i in range(k.shape[0]):
        out[i] = _binom_logtail_s(k[i], n[i], p[i], upper)
    return out


def _log_partial_sum_np(start, n, p, q, down):
    lt0 = binom_raw_logpmf(start, n, p, q)
    t = np.ones(start.shape)
    s = np.ones(start.shape)
    j = start.copy()
    live = j > 0 if down else j < n
    while live.any():
        jl, nl, pl, ql = j[live], n[live], p[live], q[live]
        if down:
            t[live] = t[live] * (jl / (nl - jl + 1.0) * (ql / pl))
            j[live] = jl - 1.0
        else:
            t[live] = t[live] * ((nl - jl) / (jl + 1.0) * (pl / ql))
            j[live] = jl + 1.0
        s[live] = s[live] + t[live]
        more = t >= s * _SUM_EPS
        live = live & more & ((j > 0) if down else (j < n))
    return lt0 + np.log(s)


def _binom_logtail_np(k, n, p, upper):
    out = np.empty(k.shape)
    below = k < 0.0
    above = k >= n
    out[below] = 0.0 if upper else -np.inf
    out[above] = -np.inf if upper else 0.0
    q = 1.0 - p
    mode = np.floor((n + 1.0) * p)
    lower = ~below & ~above & (k < mode)
    higher = ~below & ~above & ~lower
    if lower.any():
        lc = _log_partial_sum_np(k[lower], n[lower], p[lower], q[lower], True)
        out[lower] = np.log1p(-np.exp(lc)) if upper else lc
    if higher.any():
        ls = _log_partial_sum_np(k[higher] + 1.0, n[higher], p[higher], q[higher], False)
        out[higher] = ls if upper else np.log1p(-np.exp(ls))
    return out

# --------------------------------------------------------------------------
# CUSUM


@optional_njit(cache=True)
def _cusum_advance_nb(c, counts, k, h):
    n_rep, n_step = counts.shape
    out = c.copy()
    alarm = np.full(n_rep, -1, np.int64)
    for r in range(n_rep):
        v = out[r]
        for t in range(n_step):
            v = v + counts[r, t] - k
            if v < 0.0:
                v = 0.0
            if v > h:
                alarm[r] = t
                break
        out[r] = v
    return out, alarm


def _cusum_advance_np(c, counts, k, h):
    n_rep, n_step = counts.shape
    out = np.array(c, dtype=np.float64, copy=True)
    alarm = np.full(n_rep, -1, np.int64)
    live = np.arange(n_rep)
    for t in range(n_step):
        if live.size == 0:
            break
        v = out[live] + counts[live, t] - k
        v = np.maximum(v, 0.0)
        out[live] = v
        hit = v > h
        if hit.any():
            alarm[live[hit]] = t
            live = live[~hit]
    return out, alarm


# --------------------------------------------------------------------------
# GLR


@optional_njit(cache=True)
def _window_llr(s, m, mu0, r):
    # sup over mu >= mu0 of the log-likelihood ratio for a window with sum s
    # over m days; the unconstrained MLE is the window mean for both families.
    mu_hat = s / m
    if mu_hat <= mu0:
        return 0.0
    if np.isinf(r):
        val = s * np.log(mu_hat / mu0) - m * (mu_hat - mu0)
    else:
        val = s * np.log(mu_hat / mu0) - (s + m * r) * np.log1p((mu_hat - mu0) / (mu0 + r))
    return val if val > 0.0 else 0.0


@optional_njit(cache=True)
def _glr_paths_nb(counts, mu0, r, window):
    n_rep, n_step = counts.shape
    stats = np.zeros((n_rep, n_step))
    cs = np.zeros(n_step + 1)
    for i in range(n_rep):
        cs[0] = 0.0
        for t in range(n_step):
            cs[t + 1] = cs[t] + counts[i, t]
        for t in range(n_step):
            best = 0.0
            top = window if window < t + 1 else t + 1
            for m in range(1, top + 1):
                val = _window_llr(cs[t + 1] - cs[t + 1 - m], float(m), mu0, r)
                if val > best:
                    best = val
            stats[i, t] = best
    return stats


@optional_njit(cache=True)
def _glr_paths_table_nb(counts, table, window):
    n_rep, n_step = counts.shape
    stats = np.zeros((n_rep, n_step))
    cs = np.zeros(n_step + 1, np.int64)
    for i in range(n_rep):
        for t in range(n_step):
            cs[t + 1] = cs[t] + counts[i, t]
        for t in range(n_step):
            best = 0.0
            top = window if window < t + 1 else t + 1
            for m in range(1, top + 1):
                val = table[cs[t + 1] - cs[t + 1 - m], m]
                if val > best:
                    best = val
            stats[i, t] = best
    return stats


def _llr_table(s_max, mu0, r, window):
    # table[s, m] = windowed log-likelihood ratio for sum s over m days
    s = np.arange(s_max + 1, dtype=np.float64)[:, None]
    m = np.arange(window + 1, dtype=np.float64)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu_hat = s / m
        if np.isinf(r):
            val = s * np.log(mu_hat / mu0) - m * (mu_hat - mu0)
        else:
            val = s * np.log(mu_hat / mu0) - (s + m * r) * np.log1p((mu_hat - mu0) / (mu0 + r))
    val = np.where((mu_hat > mu0) & (val > 0.0), val, 0.0)
    val[:, 0] = 0.0
    return val


def _glr_paths_table_np(counts, table, window):
    n_rep, n_step = counts.shape
    cs = np.zeros((n_rep, n_step + 1), dtype=np.int64)
    np.cumsum(counts, axis=1, out=cs[:, 1:])
    stats = np.zeros((n_rep, n_step))
    for m in range(1, min(window, n_step) + 1):
        np.maximum(stats[:, m - 1:], table[cs[:, m:] - cs[:, :-m], m], out=stats[:, m - 1:])
    return stats


def _glr_paths_np(counts, mu0, r, window):
    counts = np.asarray(counts, dtype=np.float64)
    n_rep, n_step = counts.shape
    cs = np.zeros((n_rep, n_step + 1))
    np.cumsum(counts, axis=1, out=cs[:, 1:])
    stats = np.zeros((n_rep, n_step))
    with np.errstate(divide="ignore", invalid="ignore"):
        for m in range(1, min(window, n_step) + 1):
            s = cs[:, m:] - cs[:, :-m]
            mu_hat = s / m
            up = mu_hat > mu0
            if np.isinf(r):
                val = s * np.log(mu_hat / mu0) - m * (mu_hat - mu0)
            else:
                val = s * np.log(mu_hat / mu0) - (s + m * r) * np.log1p((mu_hat - mu0) / (mu0 + r))
            val = np.where(up & (val > 0.0), val, 0.0)
            np.maximum(stats[:, m - 1:], val, out=stats[:, m - 1:])
    return stats


# --------------------------------------------------------------------------
# Poisson-binomial convolution


@optional_njit(cache=True)
def _bernoulli_convolve_nb(omegas):
    n = omegas.shape[0]
    pmf = np.zeros(n + 1)
    pmf[0] = 1.0
    for i in range(n):
        w = omegas[i]
        for j in range(i + 1, 0, -1):
            pmf[j] = pmf[j] * (1.0 - w) + pmf[j - 1] * w
        pmf[0] = pmf[0] * (1.0 - w)
    return pmf


def _bernoulli_convolve_np(omegas):
    omegas = np.asarray(omegas, dtype=np.float64)
    n = omegas.shape[0]
    pmf = np.zeros(n + 1)
    pmf[0] = 1.0
    for i, w in enumerate(omegas):
        top = i + 2
        shifted = pmf[: top - 1] * w
        pmf[1:top] = pmf[1:top] * (1.0 - w) + shifted
        pmf[0] = pmf[0] * (1.0 - w)
    return pmf


@optional_njit(cache=True)
def _bernoulli_minus_poisson(w):
    # Bernoulli(w) pmf minus Poisson(w) pmf, and the Poisson(w) pmf itself,
    # truncated once Poisson terms fall below 1e-17 * w**2
    ew = math.exp(-w)
    cut = 1e-17 * w * w
    size = 2
    term = ew * w
    while size < 200:
        term *= w / size
        if term < cut:
            break
        size += 1
    delta = np.empty(size)
    pois = np.empty(size)
    # e^-w - 1 + w, by series where the direct form cancels
    if w < 0.5:
        g, t, j = 0.0, 0.5 * w * w, 2
        while t != 0.0 and abs(t) > 1e-18 * g:
            g += t
            t *= -w / (j + 1)
            j += 1
    else:
        g = math.expm1(-w) + w
    delta[0] = -g
    delta[1] = -w * math.expm1(-w)
    pois[0] = ew
    pois[1] = ew * w
    term = ew * w
    for j in range(2, size):
        term *= w / j
        pois[j] = term
        delta[j] = -term
    return delta, pois


@optional_njit(cache=True)
def _poisson_diff_nb(omegas):
    n = omegas.shape[0]
    pmf = np.zeros(n + 1)
    diff = np.zeros(n + 1)
    nxt = np.empty(n + 1)
    pmf[0] = 1.0
    for i in range(n):
        w = omegas[i]
        if w == 0.0:
            continue
        delta, pois = _bernoulli_minus_poisson(w)
        size = delta.shape[0]
        for j in range(n + 1):
            acc = 0.0
            for d in range(min(size, j + 1)):
                acc += diff[j - d] * pois[d]
                if j - d <= i:
                    acc += pmf[j - d] * delta[d]
            nxt[j] = acc
        diff[:] = nxt
        for j in range(i + 1, 0, -1):
            pmf[j] = pmf[j] * (1.0 - w) + pmf[j - 1] * w
        pmf[0] = pmf[0] * (1.0 - w)
    return pmf, diff


def _poisson_diff_np(omegas):
    omegas = np.asarray(omegas, dtype=np.float64)
    n = omegas.shape[0]
    terms = getattr(_bernoulli_minus_poisson, "py_func", _bernoulli_minus_poisson)
    pmf = np.zeros(n + 1)
    diff = np.zeros(n + 1)
    pmf[0] = 1.0
    for i, w in enumerate(omegas):
        if w == 0.0:
            continue
        delta, pois = terms(float(w))
        diff = np.convolve(diff, pois)[: n + 1]
        part = np.convolve(pmf[: i + 1], delta)[: n + 1]
        diff[: part.size] += part
        top = i + 2
        shifted = pmf[: top - 1] * w
        pmf[1:top] = pmf[1:top] * (1.0 - w) + shifted
        pmf[0] = pmf[0] * (1.0 - w)
    return pmf, diff


def _as_int_matrix(counts):
    arr = np.asarray(counts)
    if arr.ndim == 1:
        arr = arr[None, :]
    return np.ascontiguousarray(arr, dtype=np.int64)


def binom_logtail(k, n, p, upper=False):
    """log P(X <= k), or log P(X > k) when ``upper``, for X ~ Binomial(n, p).

    The tail on the far side of the mode is summed term by term from ``k``
    outward; the near side is obtained as the complement of the far one.
    ``k`` is floored; all arguments broadcast.
    """
    k, n, p = np.broadcast_arrays(
        np.floor(np.asarray(k, dtype=np.float64)),
        np.asarray(n, dtype=np.float64),
        np.asarray(p, dtype=np.float64),
    )
    shape = k.shape
    k, n, p = (np.array(a, dtype=np.float64).ravel() for a in (k, n, p))
    if USE_NUMBA:
        out = _binom_logtail_nb(k, n, p, bool(upper))
    else:
        out = _binom_logtail_np(k, n, p, bool(upper))
    return out.reshape(shape)


def cusum_advance(c, counts, k, h):
    """Advance a batch of CUSUM statistics over a chunk of counts.

    Parameters
    ----------
    c : ndarray, shape (R,)
        Starting statistic per replication.
    counts : ndarray, shape (R, T)
        Observed counts; row ``r`` feeds statistic ``r``.
    k, h : float
        Reference value and control limit.

    Returns
    -------
    c_out : ndarray, shape (R,)
        Statistic after the chunk, or at the alarm step.
    alarm : ndarray of int, shape (R,)
        Zero-based step within the chunk of the first ``c > h``; -1 if none.
    """
    c = np.ascontiguousarray(c, dtype=np.float64)
    counts = _as_int_matrix(counts)
    if USE_NUMBA:
        return _cusum_advance_nb(c, counts, float(k), float(h))
    return _cusum_advance_np(c, counts, float(k), float(h))


def glr_paths(counts, mu0, dispersion, window):
    """Windowed one-sided GLR statistic for every row and every day.

    ``dispersion=np.inf`` gives the Poisson chart.
    """
    counts = _as_int_matrix(counts)
    window = int(window)
    n_step = counts.shape[1]
    s_max = int(counts.max(initial=0)) * min(window, n_step)
    if (s_max + 1) * (window + 1) <= _TABLE_LIMIT:
        # window sums are integers: tabulate the statistic once per call
        table = _llr_table(s_max, float(mu0), float(dispersion), window)
        if USE_NUMBA:
            return _glr_paths_table_nb(counts, table, window)
        return _glr_paths_table_np(counts, table, window)
    if USE_NUMBA:
        return _glr_paths_nb(counts, float(mu0), float(dispersion), window)
    return _glr_paths_np(counts, float(mu0), float(dispersion), window)


def bernoulli_convolve(omegas):
    """Exact pmf of a sum of independent Bernoulli(omega_i) variables."""
    omegas = np.ascontiguousarray(omegas, dtype=np.float64)
    if USE_NUMBA:
        return _bernoulli_convolve_nb(omegas)
    return _bernoulli_convolve_np(omegas)


def bernoulli_poisson_diff(omegas):
    """Pmf of a Bernoulli sum and its pointwise excess over Poisson(sum omega_i).

    Returns ``(pmf, diff)`` on 0..n. ``diff`` is carried through the
    convolution itself rather than formed by subtraction, so it keeps its
    relative accuracy when the risks are tiny and the two laws agree to far
    below float64 resolution.
    """
    omegas = np.ascontiguousarray(omegas, dtype=np.float64)
    if USE_NUMBA:
        return _poisson_diff_nb(omegas)
    return _poisson_diff_np(omegas)
