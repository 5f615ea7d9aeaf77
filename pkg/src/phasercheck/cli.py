"""Command-line interface.

Subcommands:

* ``parse``: parse and validate a program, printing diagnostics.
* ``explore``: bounded concrete-semantics exploration with error and
  state-graph reporting.
* ``check``: symbolic backward reachability for a property class or a
  custom target file (serialized constraints or a partial configuration).

``check`` exit codes: 0 unreachable, 1 reachable (trace printed),
2 usage/input error, 3 budget exhausted (unrestricted mode only).
"""

from __future__ import annotations

import argparse
import json
import sys

from .concrete import Bounds, config_to_text, explore
from .engine import (
    BudgetExhausted,
    ControlReachability,
    PlainReachability,
    Reachable,
    Unreachable,
    Unrestricted,
    check,
    validate_trace,
)
from .parser import ParseError, parse
from .pre import AtomicUnsupported
from .symbolic import constraint_to_text, parse_constraints
from .syntax import NewPhaser, While, If, NextBlock, validate
from .targets import (
    assertion_targets,
    cyclic_wait_targets,
    from_partial_config,
    parse_partial_config,
    registration_error_targets,
)

EXIT_UNREACHABLE = 0
EXIT_REACHABLE = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3


def _load_program(path: str):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    try:
        return parse(text)
    except ParseError as e:
        print(f"{path}: {e}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _static_phaser_count(program) -> int:
    def count(seq) -> int:
        n = 0
        for s in seq:
            if isinstance(s, NewPhaser):
                n += 1
            elif isinstance(s, (While, If, NextBlock)):
                n += count(s.body)
        return n

    return sum(count(t.body) for t in program.tasks)


def cmd_parse(args) -> int:
    try:
        with open(args.file) as f:
            text = f.read()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        program = parse(text, check=False)
    except ParseError as e:
        print(f"{args.file}: {e}", file=sys.stderr)
        return EXIT_USAGE
    diags = validate(program)
    for d in diags:
        print(d)
    hard = [d for d in diags if not d.startswith("info:")]
    if hard:
        return EXIT_USAGE
    print(
        f"ok: {len(program.tasks)} tasks, "
        f"{len(program.bool_vars)} booleans, "
        f"{_static_phaser_count(program)} phaser creation sites"
    )
    return 0


def cmd_explore(args) -> int:
    program = _load_program(args.file)
    bounds = Bounds(
        max_steps=args.max_steps,
        max_tasks=args.max_tasks,
        max_phasers=args.max_phasers,
        max_phase=args.max_phase,
    )
    result = explore(program, bounds, record_graph=args.graph is not None)
    print(f"configurations: {len(result.configs)}")
    print(f"exhausted: {'yes' if result.exhausted else 'no'}")
    for err, idx in result.errors:
        print(f"error: {type(err).__name__} {err} at configuration {idx}")
    if args.dump:
        for i, c in enumerate(result.configs):
            print(f"# configuration {i}")
            print(config_to_text(c, program))
    if args.graph is not None:
        with open(args.graph, "w") as f:
            f.write("digraph states {\n")
            for src, task, stmt, dst in result.edges:
                label = stmt.replace('"', "'")
                f.write(f'  c{src} -> c{dst} [label="t{task}: {label}"];\n')
            f.write("}\n")
        print(f"graph written to {args.graph}")
    return 0


def _load_targets(args, program) -> list:
    if args.property == "assert":
        return assertion_targets(program)
    if args.property == "regerror":
        return registration_error_targets(program)
    if args.property == "cyclic-wait":
        return cyclic_wait_targets(program, args.max_cycle, args.slack)
    # custom: a target file with constraints or a partial configuration
    if not args.target:
        print("error: --property custom requires --target FILE", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    try:
        with open(args.target) as f:
            text = f.read()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    try:
        if "partial-config" in text.split("{", 1)[0]:
            pc = parse_partial_config(text, program.bool_vars)
            return from_partial_config(pc)
        return parse_constraints(text, program.bool_vars)
    except ValueError as e:
        print(f"{args.target}: {e}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def cmd_check(args) -> int:
    program = _load_program(args.file)
    targets = _load_targets(args, program)
    if not targets:
        print("verdict unreachable")
        print("note: no target constraints for this property", file=sys.stderr)
        return EXIT_UNREACHABLE
    k = args.k
    if k is None:
        k = max(
            [phi.dimension() for phi in targets]
            + [_static_phaser_count(program)]
        )
    if args.mode == "control":
        strategy = ControlReachability(k=k)
    elif args.mode == "plain":
        strategy = PlainReachability(k=k, b=args.b)
    else:
        strategy = Unrestricted(budget=args.budget)

    progress = None
    if args.progress:
        progress = lambda ev: print(json.dumps(ev), file=sys.stderr, flush=True)

    try:
        result = check(program, targets, strategy, progress=progress)
    except (AtomicUnsupported, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    if isinstance(result, Unreachable):
        print("verdict unreachable")
        print(f"processed {result.processed} constraints")
        return EXIT_UNREACHABLE
    if isinstance(result, BudgetExhausted):
        print("verdict unknown (budget exhausted)")
        print(f"processed {result.processed} constraints")
        return EXIT_BUDGET
    assert isinstance(result, Reachable)
    print("verdict reachable")
    trace = result.trace
    print("trace {")
    for i, phi in enumerate(trace.constraints):
        print(f"  # step {i}")
        for line in constraint_to_text(phi, program.bool_vars).splitlines():
            print("  " + line)
        if i < len(trace.stmts):
            print(f"  stmt {trace.stmts[i]}")
    print("}")
    if args.validate:
        report = validate_trace(program, trace)
        print(f"trace replay: {'ok' if report.ok else 'FAILED: ' + report.message}")
    return EXIT_REACHABLE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="phasercheck",
        description="Reachability checker for phaser-synchronized programs",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("parse", help="parse and validate a program")
    p.add_argument("file")
    p.set_defaults(func=cmd_parse)

    e = sub.add_parser("explore", help="bounded concrete exploration")
    e.add_argument("file")
    e.add_argument("--max-steps", type=int, default=10000)
    e.add_argument("--max-tasks", type=int, default=4)
    e.add_argument("--max-phasers", type=int, default=4)
    e.add_argument("--max-phase", type=int, default=6)
    e.add_argument("--dump", action="store_true", help="print every configuration")
    e.add_argument("--graph", metavar="PATH", help="write the state graph (dot format)")
    e.set_defaults(func=cmd_explore)

    c = sub.add_parser("check", help="symbolic backward reachability")
    c.add_argument("file")
    c.add_argument(
        "--property",
        choices=("assert", "regerror", "cyclic-wait", "custom"),
        default="assert",
    )
    c.add_argument("--target", metavar="PATH", help="target file for --property custom")
    c.add_argument("--mode", choices=("control", "plain", "unrestricted"), default="plain")
    c.add_argument("--k", type=int, default=None, help="max tracked phasers (default: inferred)")
    c.add_argument("--b", type=int, default=1, help="gap bound for plain mode")
    c.add_argument("--budget", type=int, default=100000, help="unrestricted-mode budget")
    c.add_argument("--slack", type=int, default=1, help="cyclic-wait distance bound")
    c.add_argument("--max-cycle", type=int, default=2, help="max wait-cycle length")
    c.add_argument("--validate", action="store_true", help="replay the trace concretely")
    c.add_argument("--progress", action="store_true", help="ndjson progress on stderr")
    c.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
