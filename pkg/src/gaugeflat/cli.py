"""Command-line front end.

    gaugeflat <command> --scenario FILE [--samples N] [--seed S] [--jet-order 2|3]
              [--quad-nodes K] [--rk4-steps M] [--tol NAME=VALUE] [--format text|structured]

``--scenario`` may be repeated and accepts a file path, the name of a bundled
scenario, or ``corpus`` for every bundled scenario.  Exit status is 0 when
every check passes, 1 when any check fails and 2 on usage or input errors.
"""
from __future__ import annotations

import argparse
import sys

from . import suite
from .report import CHECKS, Report, emit_structured, emit_text, tolerance_key
from .scenario import Scenario, ScenarioError, corpus_names, load_corpus

COMMANDS = ("flatten", "invert", "g-invert", "venice", "holonomy", "verify", "ranks")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _parse_tol(items: list[str]) -> dict[str, float]:
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--tol expects NAME=VALUE, got {item!r}")
        try:
            tolerance_key(name)
        except KeyError:
            raise UsageError(f"unknown check name {name!r} in --tol") from None
        try:
            out[name] = float(value)
        except ValueError:
            raise UsageError(f"--tol {name}: {value!r} is not a number") from None
    return out


def _load_scenarios(specs: list[str]) -> list[Scenario]:
    out = []
    for spec in specs:
        if spec == "corpus":
            out.extend(load_corpus(name) for name in corpus_names())
        elif spec in corpus_names():
            out.append(load_corpus(spec))
        else:
            out.append(Scenario.load(spec))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gaugeflat", description="Flattening, structured inverses and holonomy checks for connections on chart domains.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scenario", action="append", default=[], help="scenario file, bundled name, or 'corpus' (repeatable)")
    p.add_argument("--samples", type=int, help="sample points per check (scenario default 100)")
    p.add_argument("--seed", type=int, help="seed for sample points and loop family")
    p.add_argument("--jet-order", type=int, choices=(2, 3), help="maximum jet order; 3 enables the ch closedness check")
    p.add_argument("--quad-nodes", type=int, help="Gauss-Legendre nodes for Chern-Simons forms")
    p.add_argument("--rk4-steps", type=int, help="RK4 steps per transport")
    p.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE", help="override a check tolerance")
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.add_argument("--timing", action="store_true", help="include wall times (reports are then not reproducible)")
    p.add_argument("--n", type=int, help="chart dimension for 'ranks' without a scenario")
    p.add_argument("--r", type=int, help="bundle rank for 'ranks' without a scenario")
    p.add_argument("--list", action="store_true", help="list bundled scenarios and exit")
    return p


def _apply_overrides(sc: Scenario, args) -> None:
    for key, val in (
        ("samples", args.samples),
        ("seed", args.seed),
        ("jet_order", args.jet_order),
        ("quad_nodes", args.quad_nodes),
        ("rk4_steps", args.rk4_steps),
    ):
        if val is not None:
            sc.settings[key] = val
    if sc.settings["samples"] < 1:
        raise UsageError("--samples must be positive")
    if sc.settings["quad_nodes"] < 1:
        raise UsageError("--quad-nodes must be positive")
    if sc.settings["rk4_steps"] < 16:
        raise UsageError("--rk4-steps must be at least 16")
    for name in sc.settings.get("tolerances", {}):
        try:
            tolerance_key(name)
        except KeyError:
            raise UsageError(f"scenario {sc.name}: unknown check name {name!r} in tolerances") from None


def run_command(command: str, sc: Scenario, cli_tols: dict[str, float]) -> Report:
    settings = {k: v for k, v in sc.settings.items() if k != "tolerances"}
    overrides = {**sc.settings.get("tolerances", {}), **cli_tols}
    rep = Report(command, sc.name, settings, overrides)
    samples = sc.samples()
    if command == "flatten":
        suite.run_flatten(sc, rep, samples)
    elif command == "invert":
        suite.run_invert(sc, rep, samples)
    elif command == "g-invert":
        if sc.structure_spec is None:
            raise UsageError(f"scenario {sc.name} has no structure; g-invert needs one")
        suite.run_ginvert(sc, rep, samples)
    elif command == "venice":
        suite.run_venice(sc, rep, samples)
    elif command == "holonomy":
        suite.run_holonomy(sc, rep)
    elif command == "verify":
        suite.run_verify(sc, rep, samples)
    elif command == "ranks":
        suite.run_ranks(sc.domain.dim, sc.rank, rep)
    return rep


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout.buffer
    stderr = stderr or sys.stderr
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    if "--list" in argv:
        stdout.write(("\n".join(corpus_names()) + "\n").encode())
        return EXIT_PASS
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        tols = _parse_tol(args.tol)
        reports = []
        if args.command == "ranks" and not args.scenario:
            if args.n is None or args.r is None:
                raise UsageError("ranks needs --scenario or both --n and --r")
            if args.n < 1 or args.r < 1:
                raise UsageError("--n and --r must be positive")
            rep = Report("ranks", f"n={args.n},r={args.r}", {"n": args.n, "r": args.r}, tols)
            suite.run_ranks(args.n, args.r, rep)
            reports.append(rep)
        else:
            if not args.scenario:
                raise UsageError(f"{args.command} needs --scenario")
            for sc in _load_scenarios(args.scenario):
                _apply_overrides(sc, args)
                reports.append(run_command(args.command, sc, tols))
    except (UsageError, ScenarioError) as exc:
        stderr.write(f"gaugeflat: error: {exc}\n")
        return EXIT_USAGE
    emit = emit_structured if args.format == "structured" else emit_text
    stdout.write(emit(reports, timing=args.timing))
    stdout.flush()
    return EXIT_PASS if all(r.passed for r in reports) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
