"""Command line interface: validate, run, dump-schedule, bd.

Exit codes: 0 ok, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import scenario as scn
from .bridge_delay import DelayParams, bd_for_tc
from .grantfree import preallocate
from .linkadapt import ChannelState, McsRange
from .sim import AdmissionError
from .timebase import pattern_from_string

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", metavar="FILE", help="scenario JSON file")
    src.add_argument("--preset", metavar="NAME[:VARIANT...]",
                     help="built-in scenario, e.g. periodic, "
                          "periodic:gf_static_11, periodic:dyn_pdb, "
                          "heterogeneous:pf, heterogeneous:max_ci:no_mdbv")


def _load(args) -> scn.Scenario:
    if args.scenario:
        return scn.load_scenario(args.scenario)
    parts = args.preset.split(":")
    name, variants = parts[0], parts[1:]
    overrides = {}
    for v in variants:
        if v == "gf_adaptive":
            overrides["gf_mode"] = "adaptive"
        elif v.startswith("gf_static_"):
            overrides["gf_mode"] = "static"
            overrides["static_mcs"] = int(v.rsplit("_", 1)[1])
        elif v == "dyn_pdb":
            overrides["gf_mode"] = "none"
            overrides["discipline"] = "pdb"
        elif v in scn.DISCIPLINES:
            overrides["discipline"] = v
        elif v == "no_mdbv":
            overrides["mdbv"] = False
        else:
            raise scn.ScenarioError(f"unknown preset variant {v!r}")
    return scn.preset(name, **overrides)


def _parse_seeds(args, s: scn.Scenario) -> list[int]:
    if args.seeds:
        lo, _, hi = args.seeds.partition("..")
        return list(range(int(lo), int(hi) + 1))
    if args.seed is not None:
        return [args.seed]
    return list(s.seeds)


def cmd_validate(args) -> int:
    s = _load(args)
    issues = scn.validate(s)
    for issue in issues:
        print(f"{issue.level}: [{issue.code}] {issue.message}")
    if scn.errors(issues):
        return EXIT_VALIDATION
    print("ok")
    return EXIT_OK


def cmd_run(args) -> int:
    s = _load(args)
    issues = scn.validate(s)
    for issue in issues:
        print(f"{issue.level}: [{issue.code}] {issue.message}", file=sys.stderr)
    if scn.errors(issues):
        return EXIT_VALIDATION
    seeds = _parse_seeds(args, s)
    outdir = Path(args.out)
    aggregate = scn.run_batch(s, seeds, outdir)
    if args.format == "json":
        print(json.dumps(aggregate, indent=2, sort_keys=True))
    else:
        print(f"wrote {outdir} (seeds: {', '.join(map(str, seeds))})")
    return EXIT_OK


def cmd_dump_schedule(args) -> int:
    s = _load(args)
    issues = scn.errors(scn.validate(s))
    if issues:
        for issue in issues:
            print(f"error: [{issue.code}] {issue.message}", file=sys.stderr)
        return EXIT_VALIDATION
    gf = [f.spec for f in s.flows if f.spec.tc in (5, 6)]
    if not gf or s.gf_mode == "none":
        print("no grant-free flows in scenario", file=sys.stderr)
        return EXIT_VALIDATION
    n_ues = max(f.ue_id for f in gf) + 1
    channel = ChannelState(n_ue=n_ues, n_rb=s.pattern.n_rb, seed=s.seeds[0],
                           init_cqi=s.channel_init_cqi)
    mcs_range = (McsRange(s.static_mcs, s.static_mcs)
                 if s.gf_mode == "static" else s.mcs_range)
    sched = preallocate(gf, s.pattern, channel, mcs_range, s.params(),
                        hyperperiod_cap=s.hyperperiod_cap_ns,
                        n_re_per_rb=s.n_re_per_rb)
    labels = "".join(lb.value for lb in s.pattern.labels)
    lines = [f"# hyperperiod_ns={sched.hyperperiod} pattern={labels} "
             f"mu={s.pattern.mu} n_rb={s.pattern.n_rb}",
             "frame,slot,rb,flow_id,mcs"]
    rows = []
    for (slot, rb), (flow_id, mcs) in sched.grid.reserved_entries().items():
        frame, slot_idx = divmod(slot, s.pattern.n_slots)
        rows.append((frame, slot_idx, rb, flow_id, mcs))
    for frame, slot_idx, rb, flow_id, mcs in sorted(rows):
        lines.append(f"{frame},{slot_idx},{rb},{flow_id},{mcs}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "schedule.csv").write_text(text, encoding="utf-8")
        print(f"wrote {Path(args.out) / 'schedule.csv'}")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_bd(args) -> int:
    pattern = pattern_from_string(args.pattern, args.mu, args.n_rb)
    params = DelayParams(delta=args.delta_ns)

    class _Probe:
        bat = args.bat_ns
        period = args.period_ns

    rows = []
    for tc in range(8):
        rep = bd_for_tc(tc, pattern, params, flow=_Probe)
        rows.append({
            "tc": tc,
            "mode": rep.mode.value,
            "min_ns": rep.bounds.min,
            "max_ns": rep.bounds.max,
            "increased_bd": rep.increased_bd,
        })
    if args.format == "json":
        print(json.dumps(rows, indent=2))
    else:
        print("tc,mode,min_ns,max_ns,increased_bd")
        for r in rows:
            print(f"{r['tc']},{r['mode']},{r['min_ns']},{r['max_ns']},{r['increased_bd']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tsn5g",
        description="5G TDD uplink as a transparent TSN bridge: scheduling "
                    "library and discrete-event simulator",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    _add_scenario_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="execute a scenario batch")
    _add_scenario_args(p)
    p.add_argument("--seed", type=int, help="single seed")
    p.add_argument("--seeds", metavar="N..M", help="inclusive seed range")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("dump-schedule", help="print the grant-free grid")
    _add_scenario_args(p)
    p.add_argument("--out", help="directory for schedule.csv (default: stdout)")
    p.set_defaults(func=cmd_dump_schedule)

    p = sub.add_parser("bd", help="print bridge-delay bounds per traffic class")
    p.add_argument("--pattern", default="DDDDDDDSUU")
    p.add_argument("--mu", type=int, default=1)
    p.add_argument("--n-rb", type=int, default=106)
    p.add_argument("--delta-ns", type=int, default=0)
    p.add_argument("--bat-ns", type=int, default=0,
                   help="burst arrival used for the class-6 single-slot check")
    p.add_argument("--period-ns", type=int, default=5_000_000)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_bd)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (scn.ScenarioError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except AdmissionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # surface runtime failures with the right code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
