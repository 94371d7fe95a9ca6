"""Command line interface.

Subcommands: solve (run a config, write trace CSV + summary JSON),
verify (re-check the persisted inequalities of a trace), rates (KL rate
certification of a trace), pwidth (brute-force pyramidal width of an atom
file), bench (batch run with a certification table).

Exit codes: 0 success, 2 certification failure, 1 error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness, rates
from .harness import ConfigError, ProblemConfig


def _solve(args):
    config = ProblemConfig.from_json(args.config)
    run, obj, dom, method, tau = harness.run_config(config)
    out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.config))
    base = os.path.join(out_dir, config.name)
    trace_path = base + ".trace.csv"
    summary_path = base + ".summary.json"
    harness.write_trace_csv(trace_path, run, obj, tau)
    harness.write_summary_json(summary_path, config, run, obj, tau)
    last = run.records[-1]
    print(f"{config.name}: {len(run.records)} iterations, "
          f"f {run.records[0].f:.6g} -> {last.f:.6g}, case {last.case.value}")
    print(f"trace:   {trace_path}")
    print(f"summary: {summary_path}")
    return 0


def _summary_for(trace_path, summary_arg):
    if summary_arg:
        path = summary_arg
    else:
        path = trace_path.replace(".trace.csv", ".summary.json")
        if not os.path.exists(path):
            raise ConfigError(f"summary JSON not found next to trace: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _verify(args):
    rows = harness.read_trace_csv(args.trace)
    summary = _summary_for(args.trace, args.summary)
    failures = harness.verify_trace_rows(rows, L=summary["L"], K=summary["K"])
    if failures:
        for name, k, violation in failures[:20]:
            print(f"FAIL {name} at k={k} (violation {violation:.3e})")
        print(f"verify: {len(failures)} violation(s)")
        return 2
    print(f"verify: all persisted inequalities hold ({len(rows)} rows)")
    return 0


def _rates(args):
    rows = harness.read_trace_csv(args.trace)
    summary = _summary_for(args.trace, args.summary)
    rc = rates.descent_rate_constants(summary["L"], summary["tau"])
    a, b = rc.a, rc.b
    desing = rates.Desingularizer(M=args.M, theta=args.theta, eta=args.eta)
    f_star = args.fstar
    f0 = rows[0]["f"]
    gap0 = max(f0 - f_star, 0.0)
    env = rates.worst_case_gap_iterates(rc, desing, gap0, len(rows) - 1)
    tol = 1e-9 * (1.0 + abs(f0))
    bad = []
    for i, row in enumerate(rows):
        if (row["f"] - f_star) - env[i] > tol:
            bad.append(("objective_rate", i, (row["f"] - f_star) - env[i]))
    total = rows[-1]["cum_len"]
    floor = rates.gap_resolution_floor(f0, f_star)
    for i, row in enumerate(rows):
        gap = max(row["f"] - f_star, 0.0)
        if gap < floor and i > 0:
            continue                   # gap saturated at float resolution
        sig = rates.worst_case_gap(rc, desing, gap)
        rhs = (b / a) * desing.phi(gap) + 2.0 * np.sqrt(max(gap - sig, 0.0) / a)
        tail = total - row["cum_len"]
        if tail - rhs > tol:
            bad.append(("tail_length", i, tail - rhs))
    print("note: KL neighborhood condition assumed; conclusions checked only")
    if bad:
        for name, k, violation in bad[:20]:
            print(f"FAIL {name} at k={k} (violation {violation:.3e})")
        return 2
    print(f"rates: objective and tail envelopes hold at every k ({len(rows)} rows)")
    return 0


def _pwidth(args):
    with open(args.atoms, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    atoms = np.asarray(spec["atoms"], dtype=float)
    grid = int(spec.get("grid", args.grid))
    value = rates.pyramidal_width_bruteforce(atoms, grid=grid)
    if np.isinf(value):
        print("degenerate")
    else:
        text = f"{value:.10g}"
        if "." not in text and "e" not in text:
            text += ".0"
        print(text)
    return 0


def _bench(args):
    with open(args.suite, "r", encoding="utf-8") as fh:
        suite = json.load(fh)
    base = os.path.dirname(os.path.abspath(args.suite))
    configs = []
    for entry in suite["problems"]:
        if isinstance(entry, str):
            configs.append(ProblemConfig.from_json(os.path.join(base, entry)))
        else:
            configs.append(ProblemConfig.from_dict(entry))
    reports = harness.bench_suite(configs)
    all_ok = True
    header = f"{'name':24s} {'iters':>6s} {'f_last':>13s} {'tau':>9s}  certifications"
    print(header)
    for rep in reports:
        verdicts = []
        for name, res in rep.certifications.items():
            ok = res["passed"]
            all_ok = all_ok and ok
            verdicts.append(f"{name}={'ok' if ok else 'FAIL'}")
        print(f"{rep.name:24s} {rep.iterations:6d} {rep.f_last:13.6g} "
              f"{rep.tau:9.3g}  {' '.join(verdicts)}")
    if args.out:
        payload = [{"name": r.name, "iterations": r.iterations,
                    "f_first": r.f_first, "f_last": r.f_last, "tau": r.tau,
                    "certifications": r.certifications,
                    "fit_slope": r.fit_slope, "fit_r2": r.fit_r2}
                   for r in reports]
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"report: {args.out}")
    return 0 if all_ok else 2


def main(argv=None):
    parser = argparse.ArgumentParser(prog="sscfw")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run a config, write trace + summary")
    p.add_argument("config")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=_solve)

    p = sub.add_parser("verify", help="descent certification of a trace CSV")
    p.add_argument("trace")
    p.add_argument("--summary", default=None)
    p.set_defaults(func=_verify)

    p = sub.add_parser("rates", help="KL rate certification of a trace CSV")
    p.add_argument("trace")
    p.add_argument("--M", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--fstar", type=float, default=0.0)
    p.add_argument("--eta", type=float, default=np.inf)
    p.add_argument("--summary", default=None)
    p.set_defaults(func=_rates)

    p = sub.add_parser("pwidth", help="brute-force pyramidal width of an atom set")
    p.add_argument("atoms")
    p.add_argument("--grid", type=int, default=4)
    p.set_defaults(func=_pwidth)

    p = sub.add_parser("bench", help="run a suite and print certification table")
    p.add_argument("suite")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
