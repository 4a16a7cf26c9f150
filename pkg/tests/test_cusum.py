import csv
import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from scipy import stats

from canary.cusum import (
    CusumConfig,
    CusumState,
    arl_markov,
    arl_monte_carlo,
    calibrate_h,
    cusum_step,
    dominance_check,
    efficiency_pair_dynamic,
    reference_value,
    run_length,
    trace,
    write_trace_csv,
)
from canary.dist import NegBinLaw
from canary.errors import InvalidParameterError


def brook_evans_oracle(k, h, lam):
    """Zero-start ARL with k = K / r rational: C_t lives exactly on multiples of 1 / r.

    Solved in 30-digit arithmetic, since I - Q is nearly singular for long ARLs.
    """
    k = Fraction(k).limit_denominator(1000)
    r, K = k.denominator, k.numerator
    top = math.floor(Fraction(h) * r)  # states 0..top (in units of 1/r)
    size = top + 1
    dmax = int(lam + 40 * math.sqrt(lam) + 40) + K // r + top // r
    with mp.workdps(30):
        pm = [mp.exp(-mp.mpf(lam)) * mp.mpf(lam) ** d / mp.factorial(d) for d in range(dmax + 1)]
        A = mp.eye(size)
        for i in range(size):
            for d in range(dmax + 1):
                j = max(0, i + d * r - K)
                if j <= top:
                    A[i, j] -= pm[d]
        x = mp.lu_solve(A, mp.matrix([1] * size))
        return float(x[0])


def test_reference_value_cases():
    assert reference_value(1.0, math.e) == pytest.approx(math.e - 1.0, rel=1e-15)
    k = reference_value(19.5, 1.5 * 19.5)
    assert 19.5 < k < 29.25
    assert reference_value(7.0, 7.0 * (1 + 1e-6)) == pytest.approx(7.0, abs=1e-4)
    with pytest.raises(InvalidParameterError):
        reference_value(2.0, 1.0)


def test_step_cases():
    cfg = CusumConfig(k=3.5, h=10.0)
    assert cusum_step(CusumState(0.0), 0, cfg).c == 0.0
    assert cusum_step(CusumState(2.0), 5, cfg).c == 3.5
    s = CusumState(1.25)
    for _ in range(50):
        s = cusum_step(s, 3.5, cfg)
    assert s.c == 1.25 and s.t == 50 and not s.alarmed


def test_run_length_cases():
    assert run_length(CusumConfig(k=2.0, h=0.0), [0, 1, 3]) == 3
    assert run_length(CusumConfig(k=2.0, h=0.0), [3]) == 1
    assert run_length(CusumConfig(k=1.0, h=4.0), [0] * 100) is None
    assert run_length(CusumConfig(k=1.0, h=2.0), [2, 2, 2, 2]) == 3


def test_run_length_shorter_out_of_control():
    cfg = CusumConfig.design(5.0, 7.5, 0.0)
    cfg = cfg.with_h(calibrate_h(5.0, cfg.k, 200))
    g = np.random.default_rng(3)
    rls = [run_length(cfg, g.poisson(7.5, size=2000)) for _ in range(200)]
    assert np.mean(rls) < 200 / 5


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        CusumConfig(k=0.0, h=1.0)
    with pytest.raises(InvalidParameterError):
        CusumConfig(k=1.0, h=-1.0)


def test_arl_h_zero_is_geometric():
    for lam, k in ((2.0, 3.2), (10.0, 12.0), (0.7, 1.0)):
        want = 1.0 / stats.poisson.sf(math.floor(k), lam)
        assert arl_markov(CusumConfig(k, 0.0), lam).mean_run_length == pytest.approx(want, rel=1e-11)


def test_arl_certain_alarm_at_first_step():
    # any count above floor(k + h) alarms at once
    lam, k, h = 4.0, 4.5, 0.3
    want = 1.0 / stats.poisson.sf(math.floor(k + h), lam)
    got = arl_markov(CusumConfig(k, h), lam).mean_run_length
    assert got == pytest.approx(want, rel=1e-11)


@pytest.mark.parametrize(
    "k,h,lam",
    [(3.5, 4.0, 2.99), (2.25, 6.0, 1.5), (13.0, 10.0, 11.3), (5.2, 8.41, 4.0), (24.0, 27.5, 19.5)],
)
def test_excursion_chain_matches_rational_oracle(k, h, lam):
    got = arl_markov(CusumConfig(k, h), lam).mean_run_length
    assert got == pytest.approx(brook_evans_oracle(k, h, lam), rel=1e-9)


def test_lattice_method_close_to_exact():
    cfg = CusumConfig(24.0, 27.5)
    exact = arl_markov(cfg, 19.5).mean_run_length
    lat = arl_markov(cfg, 19.5, method="lattice").mean_run_length
    assert lat == pytest.approx(exact, rel=1e-9)
    with pytest.raises(InvalidParameterError):
        arl_markov(cfg, 19.5, method="spline")


def test_arl_decreases_with_lambda():
    cfg = CusumConfig(6.0, 9.0)
    arls = [arl_markov(cfg, lam).mean_run_length for lam in np.linspace(2.0, 9.0, 15)]
    assert np.all(np.diff(arls) < 0)


def test_arl_with_negbin_counts():
    cfg = CusumConfig(24.0, 30.0)
    po = arl_markov(cfg, 19.5).mean_run_length
    nb = arl_markov(cfg, law=NegBinLaw(19.5, 10.0)).mean_run_length
    assert nb < po


def test_monte_carlo_agrees_and_is_deterministic():
    cfg = CusumConfig(3.5, 4.0)
    mc = arl_monte_carlo(cfg, 2.99, 10_000, seed=1)
    again = arl_monte_carlo(cfg, 2.99, 10_000, seed=1)
    assert mc == again
    lo, hi = mc.ci
    assert lo <= arl_markov(cfg, 2.99).mean_run_length <= hi


def test_monte_carlo_h_zero():
    mc = arl_monte_carlo(CusumConfig(3.0, 0.0), 2.0, 10_000, seed=5)
    want = 1.0 / stats.poisson.sf(3, 2.0)
    lo, hi = mc.ci
    assert lo <= want <= hi


def test_calibrate_h_target_370():
    k = reference_value(19.5, 29.25)
    h = calibrate_h(19.5, k, 370)
    arl = arl_markov(CusumConfig(k, h), 19.5).mean_run_length
    assert 370 <= arl <= 370 * 1.05
    assert arl_markov(CusumConfig(k, h - 0.01), 19.5).mean_run_length < 370
    with pytest.raises(InvalidParameterError):
        calibrate_h(19.5, k, 1.0)


def test_arl_jumps_where_h_crosses_a_reachable_value():
    # C_t = 83 - 3k is reachable; the ARL is flat on either side and jumps
    # from below 370 to about 387 there, so no h lands within 2% of 370
    k = reference_value(19.5, 29.25)
    edge = 83 - 3 * k
    left = arl_markov(CusumConfig(k, edge - 1e-9), 19.5).mean_run_length
    right = arl_markov(CusumConfig(k, edge), 19.5).mean_run_length
    assert left < 370 and right > 370 * 1.02
    assert arl_markov(CusumConfig(k, edge - 0.0005), 19.5).mean_run_length == pytest.approx(left, rel=1e-12)


def test_calibrate_h_small_means():
    for lam in (2.0, 5.0, 10.0):
        k = reference_value(lam, 1.5 * lam)
        arl = arl_markov(CusumConfig(k, calibrate_h(lam, k, 370)), lam).mean_run_length
        assert 370 <= arl <= 370 * 1.05


def test_calibrated_chart_meets_target_by_simulation():
    k = reference_value(10.0, 15.0)
    cfg = CusumConfig(k, calibrate_h(10.0, k, 370))
    mc = arl_monte_carlo(cfg, 10.0, 4000, seed=11)
    assert mc.mean_run_length + mc.ci_halfwidth >= 370


def test_dominance_cases():
    assert dominance_check(3.0, 3.0)
    assert dominance_check(2.0, 3.0)
    assert not dominance_check(3.0, 2.0)
    n2, l1, l2 = 1001, 0.02, 0.01
    n1 = efficiency_pair_dynamic(n2, l1, l2)
    assert n1 * l1 <= n2 * l2
    assert dominance_check(n1 * l1, n2 * l2)


def test_alternative_dominance_up_to_rounding_slack():
    # with omega1 / omega2 >= lambda1 / lambda2, n1 omega1 >= n2 omega2 - omega1
    n2, l1, l2, nu = 1001, 0.02, 0.01, 1.5
    n1 = efficiency_pair_dynamic(n2, l1, l2)
    w1, w2 = nu * l1, nu * l2
    assert n1 * w1 >= n2 * w2 - w1
    a, b = stats.poisson(n2 * w2 - w1), stats.poisson(n1 * w1)
    xs = np.arange(200)
    assert np.all(b.cdf(xs) <= a.cdf(xs) + 1e-15)


def test_efficiency_pair_dynamic_cases():
    assert efficiency_pair_dynamic(1000, 0.02, 0.01) == 500
    assert efficiency_pair_dynamic(7, 0.03, 0.01) == 2
    assert efficiency_pair_dynamic(40, 0.01, 0.01) == 40


def test_trace_csv(tmp_path):
    rows = trace(CusumConfig(2.0, 3.0), [1, 5, 4, 0, 9])
    assert [r[2] for r in rows] == [0.0, 3.0, 5.0, 3.0, 10.0]
    assert [r[3] for r in rows] == [False, False, True, True, True]
    path = tmp_path / "trace.csv"
    write_trace_csv(rows, path)
    with open(path) as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["t", "d", "c", "alarmed"]
    assert got[3] == ["3", "4", "5.0", "1"]
