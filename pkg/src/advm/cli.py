"""Command-line interface: ``advm validate | compile | run | check-equivalence``.

Exit codes: 0 completed (or clean), 2 parse or validation errors,
3 quiescent-stuck, 4 execution error, 1 equivalence divergence.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from decimal import Decimal
from typing import Optional, Sequence

from .behaviors import bindings_from_decls
from .compiler import ActivityFactory, dump_runtime
from .equivalence import compare_essential_traces
from .errors import AdvmError, ParseError
from .model import Diagram, parse_activity, parse_file
from .runtime import resolve_behaviors, run_activity
from .validate import validate_diagram

EXIT_OK = 0
EXIT_DIVERGENT = 1
EXIT_INVALID = 2
EXIT_STUCK = 3
EXIT_ERROR = 4

STATUS_EXIT = {"completed": EXIT_OK, "quiescent-stuck": EXIT_STUCK, "error": EXIT_ERROR}

_PAIR_RE = re.compile(r"""\s*([A-Za-z_]\w*)\s*:\s*("(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*'|[^,]*?)\s*(?:,|$)""")


def parse_scalar(text: str):
    text = text.strip()
    if text in ("true", "false"):
        return text == "true"
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    if re.fullmatch(r"-?\d+\.\d+", text):
        return Decimal(text)
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return re.sub(r"\\(.)", r"\1", text[1:-1])
    return text


def parse_record(text: str) -> Optional[dict]:
    """Parse ``{k:v, ...}``; ``null`` stands for a control token."""
    text = text.strip()
    if text in ("null", "none", "control"):
        return None
    if not (text.startswith("{") and text.endswith("}")):
        raise ValueError(f"record expected in braces, got {text!r}")
    body = text[1:-1].strip()
    record: dict = {}
    pos = 0
    while pos < len(body):
        m = _PAIR_RE.match(body, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse record field at {body[pos:]!r}")
        record[m.group(1)] = parse_scalar(m.group(2))
        pos = m.end()
    return record


def parse_args_for(diagram: Diagram, activity: str, raw: Sequence[str]) -> list:
    """Order ``name=record`` assignments by the activity's input parameters."""
    params = [p.name for p in diagram[activity].inputs()]
    given: dict = {}
    for item in raw:
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"argument {item!r} is not of the form name=value")
        given[name.strip()] = parse_record(value)
    unknown = set(given) - set(params)
    if unknown:
        raise ValueError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    missing = [p for p in params if p not in given]
    if missing:
        raise ValueError(f"missing argument(s): {', '.join(missing)}")
    return [given[p] for p in params]


def _load(path: str) -> Diagram:
    return parse_file(path)


def _bindings(diagram: Diagram, binds: Sequence[str]) -> dict:
    out = resolve_behaviors(diagram)
    for b in binds or ():
        decls = parse_activity(f"behavior {b};").behaviors
        out.update(bindings_from_decls(decls))
    return out


def _report_invalid(diagram: Diagram, behaviors) -> bool:
    bad = False
    for name, report in validate_diagram(diagram, behaviors).items():
        for issue in report.errors:
            print(f"{name}: {issue}", file=sys.stderr)
            bad = True
    return bad


def cmd_validate(args) -> int:
    diagram = _load(args.file)
    status = EXIT_OK
    for name, report in validate_diagram(diagram).items():
        for issue in report.errors:
            print(f"{name}: error {issue}")
        for issue in report.warnings:
            print(f"{name}: warning {issue}")
        if report.errors:
            status = EXIT_INVALID
        else:
            print(f"{name}: ok")
    return status


def cmd_compile(args) -> int:
    diagram = _load(args.file)
    if _report_invalid(diagram, ()):
        return EXIT_INVALID
    names = [args.activity] if args.activity else list(diagram)
    factory = ActivityFactory(diagram, dnf_join_criteria=args.dnf)
    for name in names:
        rt = factory.create_activity(name, activate=False)
        if args.dump:
            sys.stdout.write(dump_runtime(rt))
        else:
            print(f"{name}: {len(rt.queues)} queues, {len(rt.paths)} paths, "
                  f"{len(rt.push_engines)} push / {len(rt.pull_engines)} pull engines")
    return EXIT_OK


def cmd_run(args) -> int:
    diagram = _load(args.file)
    behaviors = _bindings(diagram, args.bind)
    if _report_invalid(diagram, behaviors):
        return EXIT_INVALID
    activity = args.activity or next(iter(diagram))
    values = parse_args_for(diagram, activity, args.args)
    runner = run_activity
    if args.oracle:
        from .oracle import oracle_run as runner
    result = runner(diagram, activity, values, seed=args.seed, behaviors=behaviors)
    if args.trace == "-":
        sys.stdout.write(result.trace.to_jsonl())
    elif args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(result.trace.to_jsonl())
    summary = {"activity": activity, "status": result.status, "outputs": result.outputs}
    if result.error:
        summary["error"] = result.error
        print(f"error: {result.error}", file=sys.stderr)
    out = sys.stderr if args.trace == "-" else sys.stdout
    print(json.dumps(summary, sort_keys=True, default=str), file=out)
    return STATUS_EXIT[result.status]


def _check_one(diagram, activity, values, seeds, behaviors=None) -> tuple[bool, list[str]]:
    from .oracle import oracle_run

    lines = []
    ok = True
    for seed in range(seeds):
        vm = run_activity(diagram, activity, values, seed=seed, behaviors=behaviors)
        ref = oracle_run(diagram, activity, values, seed=seed, behaviors=behaviors)
        verdict = compare_essential_traces(vm.trace, ref.trace)
        same = bool(verdict) and vm.status == ref.status
        ok &= same
        detail = "" if same else f" ({verdict.divergence or f'status {vm.status} vs {ref.status}'})"
        lines.append(f"seed {seed}: {'equivalent' if same else 'divergent'} "
                     f"[{vm.status}, {verdict.left_count} firings]{detail}")
    return ok, lines


def cmd_check(args) -> int:
    if args.fuzz:
        from .generator import random_valid_diagram

        failures = 0
        for i in range(args.fuzz):
            gen = random_valid_diagram(args.start + i, args.size_bound)
            ok, lines = _check_one(gen.diagram, gen.activity, gen.args, args.seeds)
            if not ok:
                failures += 1
                print(f"diagram seed {gen.seed}: divergent")
                for line in lines:
                    print("  " + line)
        print(f"{args.fuzz} diagrams x {args.seeds} seeds: {failures} divergent")
        return EXIT_DIVERGENT if failures else EXIT_OK
    if not args.file:
        print("error: a diagram file or --fuzz is required", file=sys.stderr)
        return EXIT_INVALID
    diagram = _load(args.file)
    behaviors = _bindings(diagram, args.bind)
    if _report_invalid(diagram, behaviors):
        return EXIT_INVALID
    activity = args.activity or next(iter(diagram))
    values = parse_args_for(diagram, activity, args.args)
    ok, lines = _check_one(diagram, activity, values, args.seeds, behaviors)
    for line in lines:
        print(line)
    return EXIT_OK if ok else EXIT_DIVERGENT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advm", description="Activity diagram virtual machine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a diagram file against the supported subset")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compile", help="compile activities and optionally dump the runtime")
    p.add_argument("file")
    p.add_argument("--dump", action="store_true", help="print queues, paths and engines")
    p.add_argument("--activity")
    p.add_argument("--dnf", action="store_true", help="normalize join criteria to DNF")
    p.set_defaults(func=cmd_compile)

    def run_flags(q):
        q.add_argument("--activity")
        q.add_argument("--args", nargs="*", default=[], metavar="NAME=RECORD",
                       help='input parameter values, e.g. "order={id:1,status:accepted}"')
        q.add_argument("--bind", action="append", default=[], metavar="NAME=STUB(...)",
                       help="bind or override an opaque behavior with a built-in stub")

    p = sub.add_parser("run", help="execute an activity")
    p.add_argument("file")
    run_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="write the JSON-lines trace to this file ('-' for stdout)")
    p.add_argument("--oracle", action="store_true", help="use the offer-based reference interpreter")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check-equivalence", help="compare VM and reference interpreter traces")
    p.add_argument("file", nargs="?")
    run_flags(p)
    p.add_argument("--seeds", type=int, default=5, help="scheduler seeds per diagram")
    p.add_argument("--fuzz", type=int, default=0, help="number of generated diagrams")
    p.add_argument("--size-bound", type=int, default=12)
    p.add_argument("--start", type=int, default=0, help="first generator seed")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        sep = ":" if exc.line else ": "
        print(f"{getattr(args, 'file', '')}{sep}{exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except AdvmError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
