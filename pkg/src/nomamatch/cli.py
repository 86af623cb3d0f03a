"""Command-line front end.

Exit status: 0 success, 1 verification failed or block found, 2 input
error, 3 size guard tripped.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import scenarios
from .matching import DEFAULT_CAP, Matching, Status, allocate, format_prematching, format_trace, trace_digest
from .prefcore import RankedPreference, is_strongly_substitutable, is_substitutable
from .spnegame import enumerate_spne_outcomes
from .stability import (
    InstanceTooLarge,
    enumerate_classification,
    find_pairwise_block,
    find_setwise_block,
    is_in_IR_core,
    is_individually_rational,
)

OK, FAILED, INPUT_ERROR, TOO_LARGE = 0, 1, 2, 3

EPILOG = """exit status:
  0  success
  1  verification failed, block found, or run did not converge to a matching
  2  input error (unreadable or malformed file, inconsistent matching)
  3  size guard tripped (instance too large for exhaustive search)
"""


class InputError(Exception):
    pass


def _load(path: str) -> scenarios.ScenarioFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    try:
        return scenarios.loads(text)
    except scenarios.ScenarioError as exc:
        raise InputError(f"{path}: {exc}") from None


def _edges_text(m: Matching) -> str:
    edges = m.edges()
    return " ".join(f"{v}-{c}" for v, c in edges) if edges else "(empty)"


def cmd_allocate(args) -> int:
    sc = _load(args.scenario)
    if args.cap < 1:
        raise InputError("--cap must be at least 1")
    out = allocate(sc.instance, args.cap)
    print(f"status: {out.status.value}")
    print(f"iterations: {out.iterations}")
    print("matching:" if out.status is Status.CONVERGED_CONSISTENT else "state:")
    body = format_prematching(out.result)
    if body:
        print(body)
    if out.status is Status.CYCLE_DETECTED:
        print(f"cycle length: {len(out.cycle)}")
    if args.trace:
        print("trace:")
        print(format_trace(out.trace), end="")
        print(f"trace digest: {trace_digest(out.trace)}")
    if args.check_golden:
        if sc.golden is None:
            raise InputError(f"{args.scenario}: no golden block")
        problems = []
        if out.status is not Status.CONVERGED_CONSISTENT:
            problems.append("result is not a matching")
        elif tuple(Matching.from_prematching(out.result).edges()) != sc.golden.edges:
            problems.append("final matching differs from golden edges")
        if trace_digest(out.trace) != sc.golden.digest:
            problems.append("trace digest differs from golden digest")
        print("golden: " + ("match" if not problems else "MISMATCH (" + "; ".join(problems) + ")"))
        if problems:
            return FAILED
    return OK if out.status is Status.CONVERGED_CONSISTENT else FAILED


def cmd_verify(args) -> int:
    sc = _load(args.scenario)
    inst = sc.instance
    try:
        text = Path(args.matching).read_text()
    except OSError as exc:
        raise InputError(f"{args.matching}: {exc.strerror or exc}") from None
    try:
        pre = scenarios.parse_matching(text, inst)
    except scenarios.ScenarioError as exc:
        raise InputError(f"{args.matching}: {exc}") from None
    if not pre.is_consistent():
        raise InputError(f"{args.matching}: vehicle and channel assignments disagree")
    m = Matching.from_prematching(pre)

    report = None
    ir = is_individually_rational(m, inst)
    if not ir:
        report = ir.witness
    elif args.level in ("pairwise", "setwise"):
        report = find_pairwise_block(m, inst)
        if report is None and args.level == "setwise":
            report = find_setwise_block(m, inst)
    elif args.level == "core":
        core = is_in_IR_core(m, inst)
        report = core.witness
    if report is None:
        print(f"{args.level}: holds")
        return OK
    print(f"{args.level}: violated")
    print(report.describe(m))
    return FAILED


def cmd_enumerate(args) -> int:
    sc = _load(args.scenario)
    table = enumerate_classification(sc.instance, workers=args.workers)
    print("IR PS SS CORE FIX matching")
    counts = dict.fromkeys(("IR", "PS", "SS", "CORE", "FIX"), 0)
    for m, cls in table.items():
        flags = (cls.is_ir, cls.is_pairwise_stable, cls.is_setwise_stable, cls.is_in_ir_core, cls.is_t_fixed_point)
        for name, f in zip(counts, flags):
            counts[name] += bool(f)
        cells = [("1" if f else "0").rjust(w) for f, w in zip(flags, (2, 2, 2, 4, 3))]
        print(" ".join(cells) + " " + _edges_text(m))
    print(f"matchings: {len(table)}")
    print("totals: " + " ".join(f"{k}={v}" for k, v in counts.items()))
    print("note: core blocks rematch inside the coalition only, dropping all outside partners")
    return OK


def cmd_check_prefs(args) -> int:
    sc = _load(args.scenario)
    inst = sc.instance
    all_ok = True
    for agent in inst.agents:
        pref = inst.prefs[agent]
        universe = inst.universe(agent.side.other)
        sub = is_substitutable(pref, universe)
        strong = is_strongly_substitutable(pref, universe)
        all_ok = all_ok and bool(sub)
        print(f"{agent} substitutable: {'yes' if sub else 'no'}")
        if not sub:
            s, s_prime, x = sub.witness
            print(f"  witness: {x} chosen from {s_prime | x} but not from {s | x}")
        print(f"{agent} strongly-substitutable: {'yes' if strong else 'no'}")
        if not strong:
            a, b, x = strong.witness
            print(f"  witness: {a} better than {b}; {x} chosen from {a | x} but not from {b | x}")
        print(f"  ({strong.note})")
        if isinstance(pref, RankedPreference):
            listed = len(pref.ranking)
            total = (1 << len(universe.indices())) - 1
            if listed < total:
                print(f"  partial ranking: {listed} of {total} nonempty sets listed; unlisted sets are unacceptable")
    return OK if all_ok else FAILED


def cmd_spne(args) -> int:
    sc = _load(args.scenario)
    inst = sc.instance
    spne = sorted(enumerate_spne_outcomes(inst), key=Matching.sort_key)
    table = enumerate_classification(inst, flags=("ir", "pairwise", "setwise"))
    setwise = sorted((m for m, c in table.items() if c.is_setwise_stable), key=Matching.sort_key)
    print(f"spne outcomes: {len(spne)}")
    for m in spne:
        print(f"  {_edges_text(m)}")
    print(f"setwise stable: {len(setwise)}")
    for m in setwise:
        print(f"  {_edges_text(m)}")
    only_spne = [m for m in spne if m not in set(setwise)]
    only_set = [m for m in setwise if m not in set(spne)]
    print(f"equal: {'yes' if not only_spne and not only_set else 'no'}")
    for m in only_spne:
        print(f"  spne only: {_edges_text(m)}")
    for m in only_set:
        print(f"  setwise only: {_edges_text(m)}")
    return OK if not only_spne and not only_set else FAILED


def cmd_generate(args) -> int:
    if not (0 <= args.vehicles <= scenarios.MAX_SIDE and 0 <= args.channels <= scenarios.MAX_SIDE):
        raise InputError(f"--vehicles and --channels must lie in [0, {scenarios.MAX_SIDE}]")
    if args.geo:
        try:
            geo = scenarios.random_geo(
                args.vehicles,
                args.channels,
                args.seed,
                exponent=args.exponent,
                quota_per_channel=args.quota_channel,
                quota_per_vehicle=args.quota_vehicle,
            )
        except ValueError as exc:
            raise InputError(str(exc)) from None
        inst = scenarios.from_geo(geo)
        comments = (f"geo scenario seed {args.seed}",)
    else:
        model = scenarios.Model(args.model)
        inst = scenarios.random_instance(args.vehicles, args.channels, args.seed, model)
        comments = (f"random instance model {model.value} seed {args.seed}",)
    golden = None
    if args.golden:
        out = allocate(inst)
        if out.status is Status.CONVERGED_CONSISTENT:
            golden = scenarios.Golden(tuple(Matching.from_prematching(out.result).edges()), trace_digest(out.trace))
    text = scenarios.dumps(scenarios.ScenarioFile(inst, golden, comments))
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nomamatch",
        description="Stable many-to-many user-channel allocation and stability checks.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("allocate", help="run the fixed-point allocation", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("scenario")
    p.add_argument("--trace", action="store_true", help="print U, V and TM for every iteration")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="maximum number of iterations")
    p.add_argument("--check-golden", action="store_true", help="compare against the scenario's golden block")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("verify", help="check a matching against a stability notion", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("scenario")
    p.add_argument("matching")
    p.add_argument("--level", choices=("ir", "pairwise", "setwise", "core"), default="pairwise")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("enumerate", help="classify every matching", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("scenario")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("check-prefs", help="substitutability verdicts per agent", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("scenario")
    p.set_defaults(func=cmd_check_prefs)

    p = sub.add_parser("spne", help="compare game equilibrium outcomes with setwise-stable matchings",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("scenario")
    p.set_defaults(func=cmd_spne)

    p = sub.add_parser("generate", help="write a random or geolocation scenario", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--vehicles", type=int, required=True)
    p.add_argument("--channels", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", choices=[m.value for m in scenarios.Model], default=scenarios.Model.RESPONSIVE_BOTH_SIDES.value)
    p.add_argument("--geo", action="store_true", help="derive responsive preferences from random positions")
    p.add_argument("--exponent", type=float, default=2.0, help="path loss exponent (with --geo)")
    p.add_argument("--quota-channel", type=int, default=2)
    p.add_argument("--quota-vehicle", type=int, default=2)
    p.add_argument("--golden", action="store_true", help="append the allocation result as a golden block")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except InstanceTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return TOO_LARGE
