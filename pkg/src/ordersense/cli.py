"""Command-line entry point ``ordersense``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ._validation import DomainError, EvaluationError
from .distributions import parse_law
from .experiments import TARGETS, ScenarioError, bundled_scenario, emit_table, load_scenarios, run_scenarios
from .expressions import parse_structured
from .hoeffding import decompose
from .orders import RELATIONS, check_order

EXIT_OK = 0
EXIT_EXPECTATION = 1
EXIT_USAGE = 2


def _split_laws(values):
    """Accept laws as separate arguments or as one ';'-separated string."""
    out = []
    for v in values:
        out.extend(part.strip() for part in v.split(";") if part.strip())
    return out


def _cmd_check_order(args):
    x, y = parse_law(args.x), parse_law(args.y)
    report = check_order(x, y, args.relation, grid=args.grid)
    print(report)
    return EXIT_OK


def _cmd_decompose(args):
    laws = [parse_law(t) for t in _split_laws(args.inputs)]
    sf = parse_structured(args.function, len(laws))
    res = decompose(sf, laws)
    print(f"form: {sf.form}")
    print(f"mean: {res.f_empty:.10g}")
    print(f"variance: {res.total_variance:.10g}")
    print(f"{'input':<8}{'law':<24}{'S':>14}{'S_T':>14}")
    for i, law in enumerate(laws):
        print(f"{'x' + str(i + 1):<8}{law.spec():<24}{res.first_order[i]:>14.8f}{res.total[i]:>14.8f}")
    return EXIT_OK


def _report_failures(reports):
    failed = [(r, c) for r in reports for c in r.failures]
    if failed:
        print("expectation misses:", file=sys.stderr)
        for r, c in failed:
            print(f"  {r.scenario}/{r.label} {c.quantity}: got {c.value:.6g}, expected {c.expected} {c.tolerance}", file=sys.stderr)
    for r in reports:
        for note in r.notes:
            if note.startswith("warning"):
                print(f"{r.scenario}/{r.label}: {note}", file=sys.stderr)
    return EXIT_EXPECTATION if failed else EXIT_OK


def _cmd_sobol(args):
    scenarios = load_scenarios(Path(args.scenario))
    reports = run_scenarios(scenarios, seed=args.seed, samples=args.samples, n_jobs=args.jobs)
    sys.stdout.write(emit_table(reports, args.format, "indices"))
    if args.format == "text":
        sys.stdout.write("\n" + emit_table(reports, "text", "checks"))
        sys.stdout.write("\n" + emit_table(reports, "text", "summary"))
    return _report_failures(reports)


def _cmd_reproduce(args):
    targets = TARGETS if args.target == "all" else (args.target,)
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    all_reports = []
    cache = {}
    for target in targets:
        reports = run_scenarios(bundled_scenario(target), seed=args.seed, samples=args.samples, n_jobs=args.jobs, cache=cache)
        all_reports.extend(reports)
        if out is not None:
            for table in ("indices", "checks", "summary"):
                emit_table(reports, "csv", table, out / f"{target}_{table}.csv")
        if args.format == "csv" and out is None:
            sys.stdout.write(emit_table(reports, "csv", "indices"))
            sys.stdout.write(emit_table(reports, "csv", "checks"))
        elif args.format == "text":
            print(f"== {target}")
            if any(r.rows for r in reports):
                sys.stdout.write(emit_table(reports, "text", "indices"))
            sys.stdout.write(emit_table(reports, "text", "checks"))
            sys.stdout.write(emit_table(reports, "text", "summary"))
        sys.stdout.flush()
    return _report_failures(all_reports)


def build_parser():
    p = argparse.ArgumentParser(prog="ordersense", description="Sobol indices under stochastically ordered input laws.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check-order", help="compare two laws for a stochastic order")
    c.add_argument("--x", required=True, help="law spec, e.g. 'U[0,1]'")
    c.add_argument("--y", required=True)
    c.add_argument("--relation", required=True, choices=sorted(RELATIONS) + ["cx"])
    c.add_argument("--grid", type=int, default=None, help="number of grid points")
    c.set_defaults(func=_cmd_check_order)

    s = sub.add_parser("sobol", help="run a scenario file")
    s.add_argument("--scenario", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--samples", type=int, default=None, help="override the Monte Carlo sample size")
    s.add_argument("--format", choices=("csv", "text"), default="text")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=_cmd_sobol)

    r = sub.add_parser("reproduce", help="reproduce a bundled table or the counterexamples")
    r.add_argument("target", choices=TARGETS + ("all",))
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--samples", type=int, default=None, help="override the Monte Carlo sample size")
    r.add_argument("--out", default=None, help="directory for CSV files")
    r.add_argument("--format", choices=("csv", "text"), default="text")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=_cmd_reproduce)

    d = sub.add_parser("decompose", help="closed-form indices of a structured expression")
    d.add_argument("--function", required=True, help="e.g. 'exp(x1)*x2 + x3'")
    d.add_argument("--inputs", required=True, nargs="+", help="one law spec per input")
    d.set_defaults(func=_cmd_decompose)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, ScenarioError, EvaluationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
