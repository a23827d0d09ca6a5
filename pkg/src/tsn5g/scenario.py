"""Scenario definition, validation, presets, and batch execution.

Scenarios are versioned JSON documents with a strict schema (unknown keys
are rejected) so runs are reproducible and configs diffable. The two
presets mirror the periodic and heterogeneous experiment setups at desk
scale; their flow parameters are drawn once from the class templates with
a fixed seed and written out with the results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import sim as simmod
from . import tsn
from .bridge_delay import DelayParams, bd_for_tc, jitter_free_slot
from .dynamic import Discipline, QosProfile, ResourceType
from .grantfree import (
    DEFAULT_HYPERPERIOD_CAP,
    FlowSpec,
    HyperperiodError,
    admission_check,
    hyperperiod,
)
from .linkadapt import McsRange
from .timebase import TddPattern, ms, pattern_from_string, us

SCHEMA_VERSION = 1

GF_MODES = ("adaptive", "static", "none")
DISCIPLINES = {d.value: d for d in Discipline}
RESOURCE_TYPES = {r.value: r for r in ResourceType}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Issue:
    code: str
    level: str  # "error" | "warning"
    message: str


@dataclass
class ScenarioFlow:
    spec: FlowSpec
    size_min: int
    size_max: int
    bitrate_bps: int | None = None
    arrivals_ns: tuple[int, ...] | None = None

    def traffic(self) -> simmod.TrafficSpec:
        return simmod.TrafficSpec(
            size_min=self.size_min, size_max=self.size_max,
            bitrate_bps=self.bitrate_bps, arrivals=self.arrivals_ns,
        )


@dataclass
class Scenario:
    name: str
    pattern: TddPattern
    delta_ns: int
    mcs_range: McsRange
    admission_mcs_min: int
    gf_mode: str
    static_mcs: int | None
    discipline: Discipline
    flows: list[ScenarioFlow]
    channel_init_cqi: int
    channel_step_sigma: float
    channel_update_period_ns: int
    rate_bps: int
    proc_delay_ns: int
    sw1_gcl: tsn.GateControlList | None
    sw2_gcl: tsn.GateControlList | None
    sw2_auto_shift: bool
    psfp: dict[str, tsn.StreamFilter]
    horizon_ns: int
    seeds: list[int]
    initial_rbs: int = 2
    pf_alpha: float = 0.01
    n_re_per_rb: int = 144
    buffer_cap_bytes: int = 1_000_000
    hyperperiod_cap_ns: int = DEFAULT_HYPERPERIOD_CAP

    # -- derived ----------------------------------------------------------

    def params(self) -> DelayParams:
        return DelayParams(delta=self.delta_ns)

    def effective_sw2_gcl(self) -> tsn.GateControlList | None:
        if self.sw2_gcl is not None or not self.sw2_auto_shift or self.sw1_gcl is None:
            return self.sw2_gcl
        shifts = {}
        p = self.params()
        for f in self.flows:
            if f.spec.tc in (5, 6):
                rep = bd_for_tc(f.spec.tc, self.pattern, p, flow=f.spec)
                shifts[f.spec.tc] = rep.bounds.max % self.sw1_gcl.cycle
        return tsn.shift_gcl(self.sw1_gcl, shifts)

    def run_config(self) -> simmod.RunConfig:
        return simmod.RunConfig(
            pattern=self.pattern,
            params=self.params(),
            horizon=self.horizon_ns,
            rate_bps=self.rate_bps,
            proc_ns=self.proc_delay_ns,
            mcs_range=self.mcs_range,
            gf_mode=self.gf_mode,
            static_mcs=self.static_mcs,
            discipline=self.discipline,
            initial_rbs=self.initial_rbs,
            pf_alpha=self.pf_alpha,
            n_re_per_rb=self.n_re_per_rb,
            buffer_cap=self.buffer_cap_bytes,
            init_cqi=self.channel_init_cqi,
            step_sigma=self.channel_step_sigma,
            update_period=self.channel_update_period_ns,
            sw1_gcl=self.sw1_gcl,
            sw2_gcl=self.effective_sw2_gcl(),
            psfp=self.psfp or None,
            hyperperiod_cap=self.hyperperiod_cap_ns,
        )


# -- JSON schema -------------------------------------------------------------


def _require(d: dict, ctx: str, required: dict, optional: dict | None = None):
    optional = optional or {}
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise ScenarioError(f"{ctx}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(d)
    if missing:
        raise ScenarioError(f"{ctx}: missing keys {sorted(missing)}")


def _gcl_from_dict(d: dict | None, ctx: str) -> tsn.GateControlList | None:
    if d is None:
        return None
    _require(d, ctx, {"cycle_ns", "entries"}, {"base_time_ns"})
    entries = []
    for i, e in enumerate(d["entries"]):
        _require(e, f"{ctx}.entries[{i}]", {"duration_ns", "classes"})
        mask = 0
        for c in e["classes"]:
            if not 0 <= c <= 7:
                raise ScenarioError(f"{ctx}: class {c} outside [0, 7]")
            mask |= 1 << c
        entries.append((int(e["duration_ns"]), mask))
    try:
        return tsn.GateControlList(
            cycle=int(d["cycle_ns"]), entries=tuple(entries),
            base_time=int(d.get("base_time_ns", 0)))
    except tsn.GclError as exc:
        raise ScenarioError(f"{ctx}: {exc}") from None


def _gcl_to_dict(gcl: tsn.GateControlList | None) -> dict | None:
    if gcl is None:
        return None
    return {
        "cycle_ns": gcl.cycle,
        "base_time_ns": gcl.base_time,
        "entries": [
            {"duration_ns": d, "classes": [c for c in range(8) if m >> c & 1]}
            for d, m in gcl.entries
        ],
    }


def scenario_from_dict(doc: dict) -> Scenario:
    _require(doc, "scenario", {
        "version", "name", "pattern", "delta_ns", "mcs_range",
        "admission_mcs_min", "scheduler", "channel", "wired", "flows",
        "horizon_ns", "seeds",
    }, {
        "sw1_gcl", "sw2_gcl", "sw2_auto_shift", "psfp", "initial_rbs",
        "pf_alpha", "n_re_per_rb", "buffer_cap_bytes", "hyperperiod_cap_ns",
    })
    if doc["version"] != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported scenario version {doc['version']}")
    p = doc["pattern"]
    _require(p, "pattern", {"labels", "mu", "n_rb"}, {"special_ul_fraction"})
    frac = p.get("special_ul_fraction", 1)
    if isinstance(frac, list):
        frac = Fraction(frac[0], frac[1])
    pattern = pattern_from_string(p["labels"], int(p["mu"]), int(p["n_rb"]), frac)

    r = doc["mcs_range"]
    _require(r, "mcs_range", {"min", "max"})
    mcs_range = McsRange(int(r["min"]), int(r["max"]))

    sch = doc["scheduler"]
    _require(sch, "scheduler", {"grant_free", "discipline"}, {"static_mcs"})
    if sch["grant_free"] not in GF_MODES:
        raise ScenarioError(f"scheduler.grant_free must be one of {GF_MODES}")
    if sch["discipline"] not in DISCIPLINES:
        raise ScenarioError(f"scheduler.discipline must be one of {sorted(DISCIPLINES)}")

    ch = doc["channel"]
    _require(ch, "channel", {"init_cqi", "step_sigma", "update_period_ns"})
    w = doc["wired"]
    _require(w, "wired", {"rate_bps", "proc_delay_ns"})

    flows = []
    seen_ids, seen_ues = set(), set()
    for i, fd in enumerate(doc["flows"]):
        ctx = f"flows[{i}]"
        _require(fd, ctx, {"id", "tc", "ue_id", "bat_ns", "period_ns", "size_bytes"},
                 {"size_min", "size_max", "bitrate_bps", "arrivals_ns", "qos"})
        qos = None
        if fd.get("qos") is not None:
            qd = fd["qos"]
            _require(qd, f"{ctx}.qos", {"priority", "pdb_ns"},
                     {"mdbv_bytes", "resource_type"})
            qos = QosProfile(
                priority=int(qd["priority"]), pdb=int(qd["pdb_ns"]),
                mdbv=None if qd.get("mdbv_bytes") is None else int(qd["mdbv_bytes"]),
                resource_type=RESOURCE_TYPES[qd.get("resource_type", "non_gbr")],
            )
        spec = FlowSpec(
            id=fd["id"], bat=int(fd["bat_ns"]), bs=int(fd["size_bytes"]),
            period=int(fd["period_ns"]), tc=int(fd["tc"]), ue_id=int(fd["ue_id"]),
            qos=qos,
        )
        if spec.id in seen_ids:
            raise ScenarioError(f"{ctx}: duplicate flow id {spec.id}")
        if spec.ue_id in seen_ues:
            raise ScenarioError(f"{ctx}: UE {spec.ue_id} already carries a stream")
        seen_ids.add(spec.id)
        seen_ues.add(spec.ue_id)
        arrivals = fd.get("arrivals_ns")
        flows.append(ScenarioFlow(
            spec=spec,
            size_min=int(fd.get("size_min", fd["size_bytes"])),
            size_max=int(fd.get("size_max", fd["size_bytes"])),
            bitrate_bps=fd.get("bitrate_bps"),
            arrivals_ns=None if arrivals is None else tuple(int(t) for t in arrivals),
        ))

    psfp = {}
    for i, pd in enumerate(doc.get("psfp", [])):
        ctx = f"psfp[{i}]"
        _require(pd, ctx, {"stream_id"}, {"gate", "ipv", "meter"})
        meter = None
        if pd.get("meter") is not None:
            md = pd["meter"]
            _require(md, f"{ctx}.meter", {"cir_bytes_per_s", "cbs_bytes"},
                     {"eir_bytes_per_s", "ebs_bytes"})
            meter = tsn.TwoRateMeterState(
                cir=int(md["cir_bytes_per_s"]), cbs=int(md["cbs_bytes"]),
                eir=int(md.get("eir_bytes_per_s", 0)), ebs=int(md.get("ebs_bytes", 0)),
            )
        psfp[pd["stream_id"]] = tsn.StreamFilter(
            stream_id=pd["stream_id"],
            gate_gcl=_gcl_from_dict(pd.get("gate"), f"{ctx}.gate"),
            ipv=pd.get("ipv"),
            meter=meter,
        )

    return Scenario(
        name=doc["name"],
        pattern=pattern,
        delta_ns=int(doc["delta_ns"]),
        mcs_range=mcs_range,
        admission_mcs_min=int(doc["admission_mcs_min"]),
        gf_mode=sch["grant_free"],
        static_mcs=None if sch.get("static_mcs") is None else int(sch["static_mcs"]),
        discipline=DISCIPLINES[sch["discipline"]],
        flows=flows,
        channel_init_cqi=int(ch["init_cqi"]),
        channel_step_sigma=float(ch["step_sigma"]),
        channel_update_period_ns=int(ch["update_period_ns"]),
        rate_bps=int(w["rate_bps"]),
        proc_delay_ns=int(w["proc_delay_ns"]),
        sw1_gcl=_gcl_from_dict(doc.get("sw1_gcl"), "sw1_gcl"),
        sw2_gcl=_gcl_from_dict(doc.get("sw2_gcl"), "sw2_gcl"),
        sw2_auto_shift=bool(doc.get("sw2_auto_shift", False)),
        psfp=psfp,
        horizon_ns=int(doc["horizon_ns"]),
        seeds=[int(s) for s in doc["seeds"]],
        initial_rbs=int(doc.get("initial_rbs", 2)),
        pf_alpha=float(doc.get("pf_alpha", 0.01)),
        n_re_per_rb=int(doc.get("n_re_per_rb", 144)),
        buffer_cap_bytes=int(doc.get("buffer_cap_bytes", 1_000_000)),
        hyperperiod_cap_ns=int(doc.get("hyperperiod_cap_ns", DEFAULT_HYPERPERIOD_CAP)),
    )


def scenario_to_dict(s: Scenario) -> dict:
    frac = s.pattern.special_ul_fraction
    doc = {
        "version": SCHEMA_VERSION,
        "name": s.name,
        "pattern": {
            "labels": "".join(lb.value for lb in s.pattern.labels),
            "mu": s.pattern.mu,
            "n_rb": s.pattern.n_rb,
            "special_ul_fraction": (
                frac.numerator if frac.denominator == 1
                else [frac.numerator, frac.denominator]
            ),
        },
        "delta_ns": s.delta_ns,
        "mcs_range": {"min": s.mcs_range.min, "max": s.mcs_range.max},
        "admission_mcs_min": s.admission_mcs_min,
        "scheduler": {
            "grant_free": s.gf_mode,
            "static_mcs": s.static_mcs,
            "discipline": s.discipline.value,
        },
        "channel": {
            "init_cqi": s.channel_init_cqi,
            "step_sigma": s.channel_step_sigma,
            "update_period_ns": s.channel_update_period_ns,
        },
        "wired": {"rate_bps": s.rate_bps, "proc_delay_ns": s.proc_delay_ns},
        "sw1_gcl": _gcl_to_dict(s.sw1_gcl),
        "sw2_gcl": _gcl_to_dict(s.sw2_gcl),
        "sw2_auto_shift": s.sw2_auto_shift,
        "psfp": [
            {
                "stream_id": flt.stream_id,
                "gate": _gcl_to_dict(flt.gate_gcl),
                "ipv": flt.ipv,
                "meter": None if flt.meter is None else {
                    "cir_bytes_per_s": flt.meter.cir,
                    "cbs_bytes": flt.meter.cbs,
                    "eir_bytes_per_s": flt.meter.eir,
                    "ebs_bytes": flt.meter.ebs,
                },
            }
            for _, flt in sorted(s.psfp.items())
        ],
        "flows": [
            {
                "id": f.spec.id,
                "tc": f.spec.tc,
                "ue_id": f.spec.ue_id,
                "bat_ns": f.spec.bat,
                "period_ns": f.spec.period,
                "size_bytes": f.spec.bs,
                "size_min": f.size_min,
                "size_max": f.size_max,
                "bitrate_bps": f.bitrate_bps,
                "arrivals_ns": None if f.arrivals_ns is None else list(f.arrivals_ns),
                "qos": None if f.spec.qos is None else {
                    "priority": f.spec.qos.priority,
                    "pdb_ns": f.spec.qos.pdb,
                    "mdbv_bytes": f.spec.qos.mdbv,
                    "resource_type": f.spec.qos.resource_type.value,
                },
            }
            for f in s.flows
        ],
        "horizon_ns": s.horizon_ns,
        "seeds": s.seeds,
        "initial_rbs": s.initial_rbs,
        "pf_alpha": s.pf_alpha,
        "n_re_per_rb": s.n_re_per_rb,
        "buffer_cap_bytes": s.buffer_cap_bytes,
        "hyperperiod_cap_ns": s.hyperperiod_cap_ns,
    }
    return doc


def load_scenario(path: str | Path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(s: Scenario, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- validation --------------------------------------------------------------


def validate(s: Scenario) -> list[Issue]:
    issues: list[Issue] = []
    if s.pattern.s_ul < 1:
        issues.append(Issue("no_ul_slot", "error", "pattern has no UL slot"))
    if s.gf_mode == "static" and s.static_mcs is None:
        issues.append(Issue("static_mcs_missing", "error",
                            "static grant-free mode needs scheduler.static_mcs"))
    p = s.params()
    gf_flows = [f.spec for f in s.flows if f.spec.tc in (5, 6)] if s.gf_mode != "none" else []
    for f in s.flows:
        spec = f.spec
        if spec.tc == 6 and s.gf_mode != "none":
            if jitter_free_slot(spec.bat, spec.period, s.pattern, p) is None:
                issues.append(Issue(
                    "tc6_increased_bd", "warning",
                    f"flow {spec.id}: single-slot preconditions not met; the "
                    f"wider grant-free bounds will be reported instead",
                ))
        if spec.tc not in (5, 6) and s.gf_mode != "none" and spec.qos is None:
            issues.append(Issue(
                "qos_missing", "error",
                f"flow {spec.id}: dynamically scheduled flows need a QoS profile",
            ))
        if f.size_min > f.size_max:
            issues.append(Issue("bad_size_range", "error",
                                f"flow {spec.id}: size_min > size_max"))
        if not f.size_min <= spec.bs <= f.size_max:
            issues.append(Issue("bs_outside_range", "warning",
                                f"flow {spec.id}: size_bytes outside [size_min, size_max]"))
    for sid in s.psfp:
        if sid not in {f.spec.id for f in s.flows}:
            issues.append(Issue("psfp_unknown_stream", "error",
                                f"psfp filter references unknown stream {sid}"))
    if s.gf_mode == "none":
        for f in s.flows:
            if f.spec.qos is None:
                issues.append(Issue(
                    "qos_missing", "error",
                    f"flow {f.spec.id}: dynamically scheduled flows need a QoS profile",
                ))
    if gf_flows:
        try:
            hyperperiod(s.pattern, gf_flows, s.hyperperiod_cap_ns)
        except HyperperiodError as exc:
            issues.append(Issue("hyperperiod_cap", "error", str(exc)))
        else:
            mcs_min = s.static_mcs if s.gf_mode == "static" else s.admission_mcs_min
            feasible, infeasible = admission_check(
                gf_flows, s.pattern, mcs_min, p, s.hyperperiod_cap_ns)
            if not feasible:
                issues.append(Issue(
                    "admission_infeasible", "error",
                    f"grant-free flows not schedulable at MCS {mcs_min}: "
                    f"{sorted(set(fid for fid, _ in infeasible))[:8]}",
                ))
    if s.horizon_ns < 2_000_000_000:
        issues.append(Issue("short_horizon", "warning",
                            "horizon below 2 s: throughput CV will be absent"))
    if s.sw2_auto_shift and s.sw1_gcl is None:
        issues.append(Issue("shift_without_gcl", "warning",
                            "sw2_auto_shift has no effect without sw1_gcl"))
    try:
        s.effective_sw2_gcl()
    except tsn.GclError as exc:
        issues.append(Issue("gcl_shift_overlap", "error", str(exc)))
    return issues


def errors(issues: list[Issue]) -> list[Issue]:
    return [i for i in issues if i.level == "error"]


# -- execution ---------------------------------------------------------------


def run_scenario(s: Scenario, seed: int) -> simmod.RunResult:
    cfg = s.run_config()
    flows = [f.spec for f in s.flows]
    traffic = {f.spec.id: f.traffic() for f in s.flows}
    return simmod.Simulation(cfg, flows, traffic, seed).run()


def summarize(s: Scenario, result: simmod.RunResult, seed: int) -> dict:
    flows = [f.spec for f in s.flows]
    budgets = simmod.path_budget(flows, s.pattern, s.params(),
                                 s.rate_bps, s.proc_delay_ns)
    per = simmod.metric_per(result.records, budgets, s.horizon_ns)
    util = simmod.metric_rb_utilization(result.ledger)
    cv = simmod.metric_throughput_cv(result.records, flows, s.horizon_ns)
    delay = simmod.metric_delay_stats(result.records)
    fates: dict[int, dict[str, int]] = {}
    for rec in result.records:
        fates.setdefault(rec.tc, {f: 0 for f in simmod.FATES})[rec.fate] += 1
    bd_report = []
    seen_tc = sorted({f.tc for f in flows})
    for tc in seen_tc:
        member = next(f for f in flows if f.tc == tc)
        rep = bd_for_tc(tc, s.pattern, s.params(), flow=member)
        bd_report.append({
            "tc": tc,
            "mode": rep.mode.value,
            "min_ns": rep.bounds.min,
            "max_ns": rep.bounds.max,
            "frame_size_dependent_ns": rep.bounds.frame_size_dependent,
            "frame_size_independent_ns": rep.bounds.frame_size_independent,
            "increased_bd": rep.increased_bd,
        })
    return {
        "scenario": s.name,
        "seed": seed,
        "scheduler": {
            "grant_free": s.gf_mode,
            "static_mcs": s.static_mcs,
            "discipline": s.discipline.value,
        },
        "sent": {str(tc): sum(v.values()) for tc, v in sorted(fates.items())},
        "fates": {str(tc): v for tc, v in sorted(fates.items())},
        "per_percent": {str(tc): per.get(tc) for tc in seen_tc},
        "rb_utilization_percent": util,
        "throughput_cv": {str(tc): cv.get(tc) for tc in seen_tc},
        "delay_ns": {str(tc): delay.get(tc) for tc in seen_tc},
        "max_path_delay_ns": {str(tc): budgets.get(tc) for tc in seen_tc},
        "bd_report": bd_report,
        "reschedules": result.reschedules,
        "reschedules_rejected": result.reschedules_rejected,
        "deferred_initial_grants": result.deferred_initial_grants,
    }


def write_outputs(s: Scenario, result: simmod.RunResult, seed: int,
                  outdir: str | Path) -> dict:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "frames.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("flow_id,seq_no,tc,size_bytes,t_talker_ns,t_ue_ingress_ns,"
                 "t_gnb_egress_ns,t_listener_ns,fate,e2e_ns\n")
        for r in sorted(result.records, key=lambda r: (r.t_talker, r.flow_id, r.seq_no)):
            e2e = "" if r.t_listener is None else r.t_listener - r.t_talker
            fh.write(f"{r.flow_id},{r.seq_no},{r.tc},{r.size},{r.t_talker},"
                     f"{_opt(r.t_ue_ingress)},{_opt(r.t_gnb_egress)},"
                     f"{_opt(r.t_listener)},{r.fate},{e2e}\n")
    with open(out / "ledger.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("abs_slot,time_ns,slot,label,capacity,gf_reserved,gf_used,dyn_used\n")
        for row in result.ledger:
            fh.write(f"{row.abs_slot},{row.time_ns},{row.slot},{row.label},"
                     f"{row.capacity},{row.gf_reserved},{row.gf_used},{row.dyn_used}\n")
    with open(out / "grants.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("time_ns,ue_id,kind,abs_slot,rbs,mcs,bytes\n")
        for g in result.grants:
            fh.write(f"{g.time_ns},{g.ue_id},{g.kind},{g.abs_slot},{g.rbs},"
                     f"{g.mcs},{g.bytes}\n")
    summary = summarize(s, result, seed)
    with open(out / "summary.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _opt(v) -> str:
    return "" if v is None else str(v)


def run_batch(s: Scenario, seeds: list[int] | None, outdir: str | Path) -> dict:
    """Run every seed, write per-seed traces, and aggregate the summaries
    (mean and min/max across seeds per metric)."""
    seeds = list(seeds) if seeds else list(s.seeds)
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    save_scenario(s, out / "scenario.json")
    summaries = []
    for seed in seeds:
        result = run_scenario(s, seed)
        summaries.append(write_outputs(s, result, seed, out / f"seed-{seed}"))
    aggregate = {
        "scenario": s.name,
        "seeds": seeds,
        "per_percent": _aggregate(summaries, "per_percent"),
        "rb_utilization_percent": _aggregate_scalar(
            [x["rb_utilization_percent"] for x in summaries]),
        "throughput_cv": _aggregate(summaries, "throughput_cv"),
    }
    with open(out / "aggregate.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(aggregate, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return aggregate


def _aggregate(summaries: list[dict], key: str) -> dict:
    tcs = sorted({tc for x in summaries for tc in x[key]})
    out = {}
    for tc in tcs:
        vals = [x[key][tc] for x in summaries if x[key].get(tc) is not None]
        out[tc] = _aggregate_scalar(vals)
    return out


def _aggregate_scalar(vals) -> dict | None:
    vals = [v for v in vals if v is not None]
    if not vals:
        return None
    return {"mean": sum(vals) / len(vals), "min": min(vals), "max": max(vals)}


# -- presets ------------------------------------------------------------------


PRESET_NAMES = ("periodic", "heterogeneous")
PRESET_SEED = 20240917


def preset(name: str, **overrides) -> Scenario:
    """Built-in experiment scenarios.

    ``periodic``: 28 grant-free class 5/6 streams, strict-priority wiring.
    Variants via overrides: gf_mode ("adaptive"/"static"/"none"),
    static_mcs, discipline, channel_step_sigma, channel_init_cqi.

    ``heterogeneous``: 48 streams over classes {0,1,4,5,6,7}, TAS at SW1
    and SW2 (SW2 shifted by the per-class max bridge delay), grant-free
    classes 5/6 plus a selectable dynamic discipline; TC 4 profiles carry
    an MDBV unless ``mdbv=False``.
    """
    if name == "periodic":
        s = _preset_periodic()
    elif name == "heterogeneous":
        s = _preset_heterogeneous(mdbv=overrides.pop("mdbv", True))
    else:
        raise ScenarioError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    for key, value in overrides.items():
        if key == "discipline" and isinstance(value, str):
            value = DISCIPLINES[value]
        if not hasattr(s, key):
            raise ScenarioError(f"unknown preset override {key!r}")
        setattr(s, key, value)
    if s.gf_mode == "static" and s.static_mcs is None:
        s.static_mcs = 11
    return s


def _preset_periodic() -> Scenario:
    pattern = pattern_from_string("DDDDDDDSUU", mu=1, n_rb=106, special_ul_fraction=1)
    delta = us(107)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([PRESET_SEED, 1])))
    flows: list[ScenarioFlow] = []
    qos6 = QosProfile(priority=1, pdb=ms(10), resource_type=ResourceType.DC_GBR)
    qos5 = QosProfile(priority=2, pdb=ms(20), resource_type=ResourceType.DC_GBR)
    for i in range(14):
        x = (7, 8, 9)[i % 3]
        size = int(rng.integers(30, 101))
        flows.append(ScenarioFlow(
            spec=FlowSpec(
                id=f"tc6-{i:02d}", bat=x * pattern.t_slot - delta + ms(5),
                bs=size, period=ms(5), tc=6, ue_id=i, qos=qos6),
            size_min=size, size_max=size,
        ))
    for i in range(14):
        period = ms(10) if i % 2 == 0 else ms(20)
        size = int(rng.integers(50, 301))
        m = 1 + int(rng.integers(0, period // pattern.t_slot - 1))
        flows.append(ScenarioFlow(
            spec=FlowSpec(
                id=f"tc5-{i:02d}", bat=m * pattern.t_slot - delta + ms(5),
                bs=size, period=period, tc=5, ue_id=14 + i, qos=qos5),
            size_min=size, size_max=size,
        ))
    return Scenario(
        name="periodic",
        pattern=pattern,
        delta_ns=delta,
        mcs_range=McsRange(5, 28),
        admission_mcs_min=5,
        gf_mode="adaptive",
        static_mcs=None,
        discipline=Discipline.PDB_PRIORITY,
        flows=flows,
        channel_init_cqi=15,
        channel_step_sigma=0.0,
        channel_update_period_ns=ms(1),
        rate_bps=1_000_000_000,
        proc_delay_ns=2_000,
        sw1_gcl=None,
        sw2_gcl=None,
        sw2_auto_shift=False,
        psfp={},
        horizon_ns=5_000_000_000,
        seeds=[1, 2, 3],
    )


def _preset_heterogeneous(mdbv: bool = True) -> Scenario:
    pattern = pattern_from_string("DDDDDDDSUU", mu=1, n_rb=51, special_ul_fraction=1)
    delta = us(107)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([PRESET_SEED, 2])))
    flows: list[ScenarioFlow] = []
    ue = 0

    qos = {
        6: QosProfile(priority=1, pdb=ms(10), resource_type=ResourceType.DC_GBR),
        5: QosProfile(priority=2, pdb=ms(20), resource_type=ResourceType.DC_GBR),
        4: QosProfile(priority=3, pdb=ms(50), mdbv=200 if mdbv else None,
                      resource_type=ResourceType.GBR),
        7: QosProfile(priority=4, pdb=ms(100), resource_type=ResourceType.GBR),
        1: QosProfile(priority=5, pdb=ms(100), resource_type=ResourceType.GBR),
        0: QosProfile(priority=6, pdb=ms(500), resource_type=ResourceType.NON_GBR),
    }

    for i in range(8):
        x = (7, 8, 9)[i % 3]
        size = int(rng.integers(30, 101))
        flows.append(ScenarioFlow(
            spec=FlowSpec(id=f"tc6-{i:02d}", bat=x * pattern.t_slot - delta + ms(5),
                          bs=size, period=ms(5), tc=6, ue_id=ue, qos=qos[6]),
            size_min=size, size_max=size))
        ue += 1
    for i in range(8):
        period = ms(10) if i % 2 == 0 else ms(20)
        size = int(rng.integers(50, 301))
        m = 1 + int(rng.integers(0, 6))  # DL-phase arrivals, clear of TC 6 windows
        flows.append(ScenarioFlow(
            spec=FlowSpec(id=f"tc5-{i:02d}", bat=m * pattern.t_slot - delta + ms(5),
                          bs=size, period=period, tc=5, ue_id=ue, qos=qos[5]),
            size_min=size, size_max=size))
        ue += 1
    for i in range(8):
        mean = ms(int(rng.integers(10, 51)))
        flows.append(ScenarioFlow(
            spec=FlowSpec(id=f"tc4-{i:02d}", bat=int(rng.integers(0, ms(5))),
                          bs=200, period=mean, tc=4, ue_id=ue, qos=qos[4]),
            size_min=100, size_max=200))
        ue += 1
    for i in range(8):
        flows.append(ScenarioFlow(
            spec=FlowSpec(id=f"tc1-{i:02d}", bat=int(rng.integers(0, ms(10))),
                          bs=1500, period=ms(40), tc=1, ue_id=ue, qos=qos[1]),
            size_min=1000, size_max=1500, bitrate_bps=256_000))
        ue += 1
    for i in range(4):
        flows.append(ScenarioFlow(
            spec=FlowSpec(id=f"tc7-{i:02d}", bat=int(rng.integers(0, ms(50))),
                          bs=500, period=ms(100), tc=7, ue_id=ue, qos=qos[7]),
            size_min=50, size_max=500))
        ue += 1
    for i in range(4):
        flows.append(ScenarioFlow(
            spec=FlowSpec(id=f"tc0-{i:02d}", bat=int(rng.integers(0, ms(20))),
                          bs=1500, period=ms(50), tc=0, ue_id=ue, qos=qos[0]),
            size_min=30, size_max=1500))
        ue += 1

    sw1_gcl = _build_tas_gcl(flows, pattern, delta,
                             rate_bps=1_000_000_000, proc_ns=2_000)
    return Scenario(
        name="heterogeneous",
        pattern=pattern,
        delta_ns=delta,
        mcs_range=McsRange(5, 28),
        admission_mcs_min=5,
        gf_mode="adaptive",
        static_mcs=None,
        discipline=Discipline.STRICT_PRIORITY,
        flows=flows,
        channel_init_cqi=12,
        channel_step_sigma=0.02,
        channel_update_period_ns=ms(1),
        rate_bps=1_000_000_000,
        proc_delay_ns=2_000,
        sw1_gcl=sw1_gcl,
        sw2_gcl=None,
        sw2_auto_shift=True,
        psfp={},
        horizon_ns=5_000_000_000,
        seeds=[1, 2, 3],
    )


def _build_tas_gcl(flows: list[ScenarioFlow], pattern: TddPattern, delta: int,
                   rate_bps: int, proc_ns: int) -> tsn.GateControlList:
    """Dedicated SW1 windows for classes 5 and 6 around their arrival
    instants; everything else open elsewhere."""
    periods = [f.spec.period for f in flows if f.spec.tc in (5, 6)]
    cycle = pattern.t_tdd
    for p in periods:
        cycle = int(np.lcm(cycle, p))
    windows: list[tuple[int, int, int]] = []  # (start, end, class)
    guard = 5_000
    for f in flows:
        if f.spec.tc not in (5, 6):
            continue
        tx = tsn.transmission_time(f.spec.bs, rate_bps)
        phase = f.spec.bat % f.spec.period
        for k in range(cycle // f.spec.period):
            arrival = phase + k * f.spec.period
            start = (arrival - tx - proc_ns - guard) % cycle
            windows.append((start, start + tx + 2 * guard, f.spec.tc))
    merged: dict[int, list[tuple[int, int]]] = {5: [], 6: []}
    for start, end, cls in windows:
        if end <= cycle:
            merged[cls].append((start, end))
        else:
            merged[cls].append((start, cycle))
            merged[cls].append((0, end - cycle))
    for cls in merged:
        ivs = sorted(merged[cls])
        out: list[tuple[int, int]] = []
        for a, b in ivs:
            if out and a <= out[-1][1]:
                out[-1] = (out[-1][0], max(out[-1][1], b))
            else:
                out.append((a, b))
        merged[cls] = out
    points = sorted({0, cycle}
                    | {p for ivs in merged.values() for ab in ivs for p in ab})
    base_mask = sum(1 << c for c in (0, 1, 2, 3, 4, 7))
    entries = []
    for a, b in zip(points, points[1:]):
        mask = base_mask
        for cls, ivs in merged.items():
            if any(s <= a and b <= e for s, e in ivs):
                mask = 1 << cls  # dedicated: only this class
        entries.append((b - a, mask))
    packed: list[tuple[int, int]] = []
    for d, m in entries:
        if packed and packed[-1][1] == m:
            packed[-1] = (packed[-1][0] + d, m)
        else:
            packed.append((d, m))
    return tsn.GateControlList(cycle=cycle, entries=tuple(packed))
