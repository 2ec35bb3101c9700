"""Command-line entry point: ``pencilkit run <file>`` and ``pencilkit corpus``.

Exit codes: 0 all requested checks pass, 1 some check fails (or is
precondition-failed), 2 configuration error, 3 equivalent criteria
disagree (an internal inconsistency).
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError
from .problem import corpus_files, exit_code, expected_mismatches, load_problem, report_json, run_problem


def _lambdas(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"--lambda expects comma-separated numbers, got {text!r}") from None


def _parser():
    ap = argparse.ArgumentParser(prog="pencilkit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the checks of a problem file")
    run.add_argument("file")
    _sampling_flags(run)
    corpus = sub.add_parser("corpus", help="list (or run) the bundled examples")
    corpus.add_argument("--run", action="store_true", help="run every entry and compare with its expected verdicts")
    _sampling_flags(corpus)
    return ap


def _sampling_flags(p):
    p.add_argument("--points", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--lambda", dest="lambdas", type=_lambdas)
    p.add_argument("--json", dest="json_path", help="write the JSON report to this path ('-' for stdout)")
    p.add_argument("--timing", action="store_true", help="include wall times (non-deterministic) in JSON")


def _dump(obj, path):
    text = json.dumps(obj, indent=2) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _print_reports(prob, reports, out):
    print(f"== {prob.name}", file=out)
    for r in reports:
        print("  " + r.summary(), file=out)
        for s in r.sub_verdicts:
            res = "-" if s.residual is None else f"{s.residual:.3e}"
            print(f"      {s.name:<26} {s.verdict:<20} residual={res}", file=out)
        for note in r.notes:
            print(f"      note: {note}", file=out)


def _load(path, args):
    prob = load_problem(path)
    return prob.with_overrides(args.points, args.seed, args.tol, args.lambdas)


def cmd_run(args) -> int:
    try:
        prob = _load(args.file, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    reports = run_problem(prob)
    out = sys.stderr if args.json_path == "-" else sys.stdout
    _print_reports(prob, reports, out)
    code = exit_code(reports)
    if args.json_path:
        _dump(report_json(prob, reports, args.timing), args.json_path)
    return code


def cmd_corpus(args) -> int:
    entries = []
    for path in corpus_files():
        try:
            prob = _load(path, args)
        except ConfigError as exc:
            print(f"{path.stem}: config error: {exc}", file=sys.stderr)
            return 2
        entries.append((path, prob))
    if not args.run:
        for path, prob in entries:
            print(f"{prob.name}")
            if prob.description:
                print(f"    {prob.description}")
            if prob.exercises:
                print(f"    exercises: {prob.exercises}")
            for check, verdict in sorted(prob.expected.items()):
                print(f"    expected {check}: {verdict}")
        return 0
    out = sys.stderr if args.json_path == "-" else sys.stdout
    payload = []
    mismatched = 0
    for path, prob in entries:
        reports = run_problem(prob)
        _print_reports(prob, reports, out)
        bad = expected_mismatches(prob, reports)
        for check, want, got in bad:
            print(f"  MISMATCH {check}: expected {want}, got {got}", file=out)
        mismatched += bool(bad)
        payload.append(report_json(prob, reports, args.timing))
    if args.json_path:
        _dump(payload, args.json_path)
    print(f"{len(entries) - mismatched}/{len(entries)} corpus entries match their expected verdicts", file=out)
    return 0 if mismatched == 0 else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    return cmd_corpus(args)


if __name__ == "__main__":
    sys.exit(main())
