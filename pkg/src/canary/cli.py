"""``canary`` command-line interface.

Exit status: 0 on success, 1 when the input or options are invalid, 2 when
the analysis itself fails (unmet preconditions, no sample size found, ...).
JSON reports carry the effective configuration; only ``generated_at``
changes between identical runs.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import math
import os
import sys

import numpy as np

from . import __version__
from . import cusum, exact_test, glr, io, sim, theory
from .errors import (
    CanaryError,
    CaseDataError,
    InvalidParameterError,
    InvalidScalingError,
    SampleTooLargeError,
    TooLargeForExactError,
)

EXIT_OK, EXIT_INVALID, EXIT_ANALYSIS = 0, 1, 2
_VALIDATION = (InvalidParameterError, CaseDataError, SampleTooLargeError, InvalidScalingError, TooLargeForExactError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _diag(msg):
    tag = "error:"
    if sys.stderr.isatty() and not os.environ.get("NO_COLOR"):
        tag = "\033[31merror:\033[0m"
    print(f"{tag} {msg}", file=sys.stderr)


# --------------------------------------------------------------------------
# output helpers


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (dt.date,)):
        return obj.isoformat()
    return obj


def _config(args):
    skip = {"func", "command"}
    return {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in skip}


def _emit(args, result):
    doc = {
        "command": args.command,
        "version": __version__,
        "config": _config(args),
        "result": _jsonable(result),
        "generated_at": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
    }
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if args.output and args.output != "-":
        io.atomic_write_text(args.output, text)
    else:
        sys.stdout.write(text)


def _trace_csv(dates, counts, stats, threshold, path):
    lines = ["date,count,statistic,threshold,alarmed"]
    for d, c, s in zip(dates, counts, stats):
        lines.append(f"{d.isoformat()},{int(c)},{float(s)!r},{float(threshold)!r},{int(s > threshold)}")
    io.atomic_write_text(path, "\n".join(lines) + "\n")


def _prob(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1): {text}")
    return v


def _posint(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer: {text}")
    return v


def _posfloat(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0.0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def _window(text):
    try:
        a, b = text.split(":")
        start, end = dt.date.fromisoformat(a), dt.date.fromisoformat(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:END ISO days, got {text!r}") from None
    if end < start:
        raise argparse.ArgumentTypeError("baseline window ends before it starts")
    return start, end


def _load_stratum(args):
    series = io.read_case_csv(args.input, allow_gaps=args.allow_gaps)
    dates, counts = series.select(args.stratum)
    start, end = args.baseline
    base = np.array([start <= d <= end for d in dates])
    if base.sum() < 2:
        raise InvalidParameterError("baseline window holds fewer than two days of data")
    after = np.array([d > end for d in dates])
    return dates, counts, base, after


# --------------------------------------------------------------------------
# subcommands


def cmd_power(args):
    if args.n is not None:
        plan = exact_test.make_plan(args.n, args.p0, args.alpha)
        result = {"plan": plan, "power": exact_test.power(plan, args.q)}
    else:
        lo, hi = args.n_range
        pts = exact_test.power_curve(args.p0, args.q, args.alpha, range(lo, hi + 1))
        result = {"points": len(pts), "min_power": min(p.power for p in pts), "max_power": max(p.power for p in pts)}
        if args.csv:
            io.atomic_write_text(args.csv, "n,power\n" + "".join(f"{p.n},{p.power!r}\n" for p in pts))
            result["csv"] = args.csv
    _emit(args, result)


def cmd_samplesize(args):
    n = exact_test.min_sample_size(args.p0, args.q, args.alpha, args.power, mode=args.mode)
    pw = exact_test.power_array([max(n - 1, 1), n], args.p0, args.q, args.alpha)
    evidence = {"power_at_n": float(pw[1]), "power_at_n_minus_1": float(pw[0]) if n > 1 else None}
    if args.mode == "stable":
        evidence["first_hit"] = exact_test.min_sample_size(args.p0, args.q, args.alpha, args.power, mode="first-hit")
        evidence["certified_horizon"] = exact_test.certified_horizon(args.p0, args.q, args.alpha, args.power)
    _emit(args, {"n": n, "mode": args.mode, "evidence": evidence})


def cmd_theorem(args):
    s = theory.TheoremScenario(args.n2, args.p1, args.p2, args.alpha, args.q1, args.q2, args.nu)
    rep = theory.verify_theorem(s, enforce=not args.ignore_preconditions)
    out = rep.to_dict()
    out["preconditions_met"] = rep.conditions.all_met
    _emit(args, out)


def cmd_lemmas(args):
    rep = theory.run_lemma_suite(args.n_max, tuple(args.scalings), p_values=args.p)
    _emit(args, rep.to_dict())
    if rep.total_violations:
        _diag(f"{rep.total_violations} lemma violations")
        return EXIT_ANALYSIS
    return EXIT_OK


def cmd_cusum(args):
    dates, counts, base, after = _load_stratum(args)
    lam0 = float(np.mean(counts[base])) if args.lambda0 is None else args.lambda0
    lam1 = args.shift * lam0
    k = cusum.reference_value(lam0, lam1)
    h = cusum.calibrate_h(lam0, k, args.target_arl) if args.h is None else args.h
    cfg = cusum.CusumConfig(k, h, lam0, lam1)
    mon_dates = [d for d, a in zip(dates, after) if a]
    rows = cusum.trace(cfg, counts[after])
    stats = [c for _, _, c, _ in rows]
    alarm = next((mon_dates[i] for i, r in enumerate(rows) if r[3]), None)
    if args.trace:
        _trace_csv(mon_dates, counts[after], stats, h, args.trace)
    result = {
        "lambda0": lam0,
        "lambda1": lam1,
        "k": k,
        "h": h,
        "in_control_arl": cusum.arl_markov(cfg, lam0).mean_run_length,
        "alarm_date": alarm,
        "monitored_days": len(rows),
    }
    _emit(args, result)


def cmd_glr(args):
    dates, counts, base, after = _load_stratum(args)
    mean, disp = glr.estimate_baseline(counts[base])
    if args.dispersion is not None:
        disp = args.dispersion
    if args.threshold is None:
        cal = glr.calibrate_threshold(mean, disp, args.target_arl, args.max_window, args.replications, args.seed)
        threshold, cal_info = cal.threshold, cal
    else:
        threshold, cal_info = args.threshold, None
    cfg = glr.GlrConfig(mean, disp, threshold, args.max_window)
    mon_dates = [d for d, a in zip(dates, after) if a]
    tr = glr.monitor(counts[after], cfg)
    if args.trace:
        _trace_csv(mon_dates, counts[after], tr.statistics, threshold, args.trace)
    result = {
        "baseline_mean": mean,
        "dispersion": disp,
        "threshold": threshold,
        "calibration": cal_info,
        "alarm_day": tr.alarm_time,
        "alarm_date": mon_dates[tr.alarm_time - 1] if tr.alarm_time else None,
        "monitored_days": len(mon_dates),
    }
    _emit(args, result)


def _spec(kind, m, mean, label):
    if kind == "homogeneous":
        return sim.SubpopSpec.homogeneous(m, mean, label=label)
    if kind == "beta":
        return sim.SubpopSpec.beta(m, mean, label=label)
    return sim.SubpopSpec.two_point(m, mean, label=label)


def cmd_simulate(args):
    if args.experiment == "delay":
        s1 = _spec(args.risk_model, args.m, args.lambda1, "1")
        s2 = _spec(args.risk_model, args.m, args.lambda2, "2")
        design = sim.DelayDesign(args.n2, args.nu, args.target_arl)
        rep = sim.detection_delay_experiment(s1, s2, args.chart, design, args.replications, args.seed)
        _emit(args, rep.to_dict())
    elif args.experiment == "case-study":
        rep = sim.negbin_case_study(
            (args.lambda1, args.lambda2), args.dispersion, args.nu, args.onset, args.replications, args.seed,
            args.target_arl,
        )
        _emit(args, rep.to_dict())
    else:
        spec = _spec(args.risk_model, args.m, args.lambda1, args.stratum).with_nu(args.nu)
        handle = sim.draw_sample(spec, args.n2, args.seed)
        stream = sim.simulate_stream(handle, spec, args.horizon, args.onset, args.seed + 1)
        series = io.series_from_counts(stream.counts, args.start, args.stratum)
        if args.csv:
            io.write_case_csv(series, args.csv)
        _emit(args, {"days": len(stream), "total_cases": int(stream.counts.sum()), "csv": args.csv})


def cmd_convert(args):
    series = io.convert_rivm(args.input)
    io.write_case_csv(series, args.csv)
    _emit(args, {"rows": len(series), "strata": series.strata(), "csv": args.csv})


# --------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="canary", description="Sampling efficiency and outbreak monitoring for subpopulations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--output", "-o", default=None, help="JSON report path (default: stdout)")
        return sp

    sp = common(sub.add_parser("power", help="exact test power"))
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--n", type=_posint)
    g.add_argument("--n-range", type=_posint, nargs=2, metavar=("LO", "HI"))
    sp.add_argument("--p0", type=_prob, required=True)
    sp.add_argument("--q", type=_prob, required=True)
    sp.add_argument("--alpha", type=_prob, default=0.05)
    sp.add_argument("--csv", help="power curve CSV (with --n-range)")
    sp.set_defaults(func=cmd_power)

    sp = common(sub.add_parser("samplesize", help="minimum sample size for the exact test"))
    sp.add_argument("--p0", type=_prob, required=True)
    sp.add_argument("--q", type=_prob, required=True)
    sp.add_argument("--alpha", type=_prob, default=0.05)
    sp.add_argument("--power", type=_prob, default=0.8)
    sp.add_argument("--mode", choices=("stable", "first-hit"), default="stable")
    sp.set_defaults(func=cmd_samplesize)

    sp = common(sub.add_parser("theorem", help="check the efficiency inequality for one scenario"))
    sp.add_argument("--n2", type=_posint, required=True)
    sp.add_argument("--p1", type=_prob, required=True)
    sp.add_argument("--p2", type=_prob, required=True)
    sp.add_argument("--alpha", type=_prob, default=0.05)
    sp.add_argument("--nu", type=_posfloat)
    sp.add_argument("--q1", type=_prob)
    sp.add_argument("--q2", type=_prob)
    sp.add_argument("--ignore-preconditions", action="store_true", help="evaluate the inequality even if preconditions fail")
    sp.set_defaults(func=cmd_theorem)

    sp = common(sub.add_parser("lemmas", help="exhaustive lemma checks on a grid"))
    sp.add_argument("--n-max", type=_posint, default=100)
    sp.add_argument("--scalings", type=_posint, nargs="+", default=list(theory.DEFAULT_SCALINGS))
    sp.add_argument("--p", type=_prob, nargs="+", default=None, help="p grid (default: 25 log-spaced values)")
    sp.set_defaults(func=cmd_lemmas)

    for name, helptext in (("cusum", "Poisson CUSUM on a case series"), ("glr", "negative-binomial GLR on a case series")):
        sp = common(sub.add_parser(name, help=helptext))
        sp.add_argument("--input", required=True)
        sp.add_argument("--stratum", required=True)
        sp.add_argument("--baseline", type=_window, required=True, metavar="START:END")
        sp.add_argument("--target-arl", type=_posfloat, default=cusum.DEFAULT_TARGET_ARL)
        sp.add_argument("--allow-gaps", action="store_true")
        sp.add_argument("--trace", help="trace CSV path")
        if name == "cusum":
            sp.add_argument("--lambda0", type=_posfloat, help="in-control mean (default: baseline mean)")
            sp.add_argument("--shift", type=_posfloat, default=1.5, help="design out-of-control factor")
            sp.add_argument("--h", type=float, help="control limit (default: calibrated)")
            sp.set_defaults(func=cmd_cusum)
        else:
            sp.add_argument("--dispersion", type=_posfloat, help="override the estimated dispersion")
            sp.add_argument("--threshold", type=_posfloat, help="alarm threshold (default: calibrated)")
            sp.add_argument("--max-window", type=_posint, default=glr.DEFAULT_WINDOW)
            sp.add_argument("--replications", type=_posint, default=2000)
            sp.add_argument("--seed", type=int, default=0)
            sp.set_defaults(func=cmd_glr)

    sp = common(sub.add_parser("simulate", help="simulation experiments and synthetic streams"))
    sp.add_argument("experiment", choices=("delay", "case-study", "stream"))
    sp.add_argument("--chart", choices=("cusum", "glr"), default="cusum")
    sp.add_argument("--lambda1", type=_posfloat, default=0.02, help="rate of subpopulation 1 (case-study: high baseline)")
    sp.add_argument("--lambda2", type=_posfloat, default=0.01, help="rate of subpopulation 2 (case-study: low baseline)")
    sp.add_argument("--n2", type=_posint, default=1001)
    sp.add_argument("--m", type=_posint, default=20000, help="subpopulation size")
    sp.add_argument("--risk-model", choices=("two-point", "homogeneous", "beta"), default="two-point")
    sp.add_argument("--nu", type=float, default=1.5)
    sp.add_argument("--dispersion", type=_posfloat, default=10.0)
    sp.add_argument("--onset", type=_posint, default=36)
    sp.add_argument("--horizon", type=_posint, default=120)
    sp.add_argument("--start", default="2020-06-01")
    sp.add_argument("--stratum", default="synthetic")
    sp.add_argument("--target-arl", type=_posfloat, default=cusum.DEFAULT_TARGET_ARL)
    sp.add_argument("--replications", type=_posint, default=500)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--csv", help="case CSV path (stream)")
    sp.set_defaults(func=cmd_simulate)

    sp = common(sub.add_parser("convert-rivm", help="aggregate a case-level RIVM export to date,stratum,count"))
    sp.add_argument("--input", required=True)
    sp.add_argument("--csv", required=True)
    sp.set_defaults(func=cmd_convert)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _diag(str(exc))
        return EXIT_INVALID
    try:
        code = args.func(args)
    except _VALIDATION as exc:
        _diag(str(exc))
        return EXIT_INVALID
    except (CanaryError, ArithmeticError) as exc:
        _diag(f"{type(exc).__name__}: {exc}")
        return EXIT_ANALYSIS
    except OSError as exc:
        _diag(str(exc))
        return EXIT_INVALID
    return EXIT_OK if code is None else code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
