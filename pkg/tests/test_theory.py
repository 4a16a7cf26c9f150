import math

import numpy as np
import pytest

from canary.errors import InvalidParameterError, InvalidScalingError, PreconditionError
from canary.theory import (
    TheoremScenario,
    check_conditions,
    lemma1_check,
    lemma2_cdf_step_bound,
    lemma2_quantile_dominance,
    lemma2_quantile_dominance_scan,
    lemma2_quasimedian,
    pmf_bound_check,
    pooled_prevalence,
    pooled_sample_size_check,
    random_scenarios,
    run_lemma_suite,
    verify_theorem,
)

from oracles import binom_cdf_mp, binom_sf_mp


def test_alpha_threshold_formula():
    s = TheoremScenario(n2=1000, p1=0.02, p2=0.01, alpha=0.05, nu=1.5)
    flags = check_conditions(s)
    want = 0.5 - math.sqrt(1 / (2 * math.e * 1000 * 0.01 * 0.99))
    assert flags.alpha_threshold == pytest.approx(want, rel=1e-14)
    assert flags.alpha_threshold == pytest.approx(0.364, abs=1e-3)
    assert flags.alpha_ok


def test_alpha_condition_unsatisfiable_for_small_n():
    s = TheoremScenario(n2=10, p1=0.02, p2=0.01, alpha=1e-6, nu=1.5)
    flags = check_conditions(s)
    assert flags.alpha_threshold < 0
    assert not flags.alpha_ok


def test_high_power_scenario_meets_everything():
    s = TheoremScenario(n2=20000, p1=0.8, p2=0.4, alpha=0.05, q1=1.0, q2=0.5)
    flags = check_conditions(s)
    assert flags.alpha_ok and flags.power_ok and flags.all_met


def test_unmet_preconditions_raise_and_can_be_bypassed():
    s = TheoremScenario(n2=1000, p1=0.02, p2=0.01, alpha=0.05, nu=1.5)
    with pytest.raises(PreconditionError) as exc:
        verify_theorem(s)
    assert "power_ok" in exc.value.failed
    rep = verify_theorem(s, enforce=False)
    assert not rep.conditions.all_met
    assert rep.n1_floor == 500 and rep.penalty == 0.0


def test_identical_populations_give_zero_slack():
    s = TheoremScenario(n2=4000, p1=0.2, p2=0.2, alpha=0.05, q1=0.3, q2=0.3)
    rep = verify_theorem(s)
    assert rep.n1_floor == 4000 and rep.n1_integer
    assert rep.penalty == 0.0
    assert rep.slack == 0.0
    assert rep.verdict


def test_integral_reduction_has_no_penalty():
    s = TheoremScenario(n2=6000, p1=0.2, p2=0.1, alpha=0.05, nu=2.0)
    rep = verify_theorem(s)
    assert rep.n1_integer and rep.penalty == 0.0
    assert rep.verdict


def test_non_integral_reduction_penalty():
    s = TheoremScenario(n2=6001, p1=0.3, p2=0.1, alpha=0.05, nu=2.0)
    rep = verify_theorem(s)
    assert not rep.n1_integer and rep.n1_floor == 2000
    assert rep.penalty == pytest.approx(math.sqrt(0.6 / (2 * math.e * 2000 * 0.4)), rel=1e-14)
    assert rep.verdict


def test_scenario_validation():
    with pytest.raises(InvalidParameterError):
        TheoremScenario(n2=100, p1=0.01, p2=0.02, alpha=0.05, nu=1.5)
    with pytest.raises(InvalidParameterError):
        TheoremScenario(n2=100, p1=0.02, p2=0.01, alpha=0.05)
    with pytest.raises(InvalidParameterError):
        TheoremScenario(n2=100, p1=0.02, p2=0.01, alpha=0.05, nu=0.9)


def test_random_scenarios_small_batch():
    scen = random_scenarios(40, seed=7, n2_max=2000)
    assert len(scen) == 40
    assert all(check_conditions(s).all_met for s in scen)
    assert all(verify_theorem(s).verdict for s in scen)


def test_lemma1_boundary_case():
    rep = lemma1_check(30, 1, 0.2)
    assert rep.boundary and rep.m == 30
    assert rep.upper_holds and rep.lower_holds


@pytest.mark.parametrize("n,a,p", [(20, 2, 0.1), (100, 4, 0.02), (60, 5, 0.13)])
def test_lemma1_against_mp(n, a, p):
    rep = lemma1_check(n, a, p)
    assert rep.holds and not rep.boundary
    m = n // a
    lo, hi = rep.upper_range
    for x in range(lo, hi + 1):
        assert binom_sf_mp(x, n, p) > binom_sf_mp(x, m, a * p)
    lo, hi = rep.lower_range
    for x in range(lo, hi + 1):
        assert binom_cdf_mp(x, n, p) > binom_cdf_mp(x, m, a * p)


def test_lemma1_rejects_bad_scaling():
    with pytest.raises(InvalidScalingError):
        lemma1_check(10, 3, 0.1)
    with pytest.raises(InvalidScalingError):
        lemma1_check(10, 2, 0.6)


def test_step_bound_cases():
    rep = lemma2_cdf_step_bound(1, 0.5)
    assert rep.bound == pytest.approx(math.sqrt(0.5 / (2 * math.e * 0.5)), rel=1e-15)
    assert rep.bound == pytest.approx(0.4289, abs=1e-4)
    assert rep.max_gap == pytest.approx(0.25, rel=1e-14)
    assert lemma2_cdf_step_bound(50, 0.1).holds
    tiny = lemma2_cdf_step_bound(50, 1e-9)
    assert tiny.max_gap < 1e-7 and tiny.bound < 1e-4 and tiny.holds


def test_quantile_dominance_cases():
    res = lemma2_quantile_dominance(100, 2, 0.05, 0.95)
    thr = 0.5 + math.sqrt(1 / (2 * math.e * 100 * 0.05 * 0.95))
    assert res.threshold == pytest.approx(thr)
    assert res.threshold == pytest.approx(0.697, abs=1e-3)
    assert res.status == "holds"
    assert lemma2_quantile_dominance(100, 2, 0.05, 0.6).status == "skipped"
    same = lemma2_quantile_dominance(100, 1, 0.05, 0.9)
    assert same.quantile_n == same.quantile_scaled


def test_quantile_dominance_scan_random_grid(rng):
    for _ in range(40):
        a = int(rng.choice([2, 4, 5, 10]))
        n = a * int(rng.integers(1, 60))
        p = float(rng.uniform(0.001, 0.99 / a))
        levels, bad = lemma2_quantile_dominance_scan(n, a, p)
        assert bad == []


def test_quasimedian_cases():
    rep = lemma2_quasimedian(100, 0.3)
    assert rep.lower_holds and rep.upper_holds
    rep = lemma2_quasimedian(5, 0.01)
    assert rep.lower_holds is None and rep.reasons
    rep = lemma2_quasimedian(10_000, 0.01)
    assert rep.lower_holds and rep.upper_holds


def test_pmf_bound_check():
    assert pmf_bound_check(1, 0.5).max_pmf == pytest.approx(0.5)
    assert pmf_bound_check(1000, 0.01).holds


def test_lemma_suite_small_grid():
    rep = run_lemma_suite(n_max=60, p_values=[0.01, 0.05, 0.2, 0.45])
    assert rep.total_violations == 0
    assert rep.checks["crossing"] > 0 and rep.checks["step_bound"] == 60 * 4
    d = rep.to_dict()
    assert d["total_violations"] == 0


def test_pooling_is_not_more_efficient():
    assert pooled_prevalence([0.02, 0.01], [0.5, 0.5]) == pytest.approx(0.015)
    n_pool, n_best = pooled_sample_size_check(0.04, 0.01, 0.5, 2.0, 0.05, 0.8)
    assert n_pool >= n_best
    with pytest.raises(InvalidParameterError):
        pooled_prevalence([0.1, 0.2], [0.0, 0.0])
