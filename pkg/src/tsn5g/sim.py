"""Deterministic discrete-event simulation of the talker - SW1 - UEs -
gNB - SW2 - listener chain.

SW1 fans out over one egress port per UE, so wired contention exists only
at the shared SW2 egress toward the listener. The 5G segment transmits in
whole slots: grant-free flows follow the pre-allocated grid, dynamic UEs
run the SR / initial grant / BSR ladder with grants planned at TDD cycle
boundaries. Everything is driven by one event heap ordered by
(time, priority, sequence), so identical (scenario, seed) pairs replay
byte-identically.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import linkadapt, tsn
from .bridge_delay import DelayParams, bd_for_tc, dynamic_bd_bounds
from .dynamic import (
    BufferedFrame,
    Discipline,
    GnbScheduler,
    ResourceType,
    UeUplinkState,
    rlc_pdb_drop,
)
from .grantfree import FlowSpec, GrantFreeSchedule, needs_reschedule, preallocate
from .linkadapt import ChannelState, McsRange
from .timebase import TddPattern, next_ul_opportunity

FATES = (
    "delivered", "lost_radio", "dropped_gate", "dropped_meter",
    "dropped_pdb", "dropped_overflow", "in_flight",
)

# Event priorities at equal timestamps: channel moves first, then frame
# and port work (arrivals settle before the slot machinery reads them),
# then cycle planning, slot transmissions, and deliveries.
PRIO_CHANNEL = 0
PRIO_FRAME = 1
PRIO_CYCLE = 2
PRIO_SLOT = 3
PRIO_DELIVERY = 4

RADIO_RANGE = McsRange(0, 28)  # transmit feasibility ignores scheduler clamps


@dataclass
class FrameRecord:
    flow_id: str
    seq_no: int
    tc: int
    size: int
    t_talker: int
    t_ue_ingress: int | None = None
    t_gnb_egress: int | None = None
    t_listener: int | None = None
    fate: str | None = None


# Traffic templates grouped by class: (periodic?, fixed size?, rate driven?)
# Periods and sizes come from the scenario flow entries.
PERIODIC_TCS = {1, 5, 6, 7}
FIXED_SIZE_TCS = {5, 6}
RATE_DRIVEN_TCS = {1}


@dataclass(frozen=True)
class TrafficSpec:
    """Per-flow generation knobs beyond the FlowSpec tuple."""

    size_min: int
    size_max: int
    bitrate_bps: int | None = None
    arrivals: tuple[int, ...] | None = None  # explicit override


def generate_traffic(flow: FlowSpec, traffic: TrafficSpec, horizon: int,
                     rng: np.random.Generator) -> list[tuple[int, int]]:
    """Arrival (time, size) list for one flow over [0, horizon)."""
    if traffic.size_min > traffic.size_max or traffic.size_min <= 0:
        raise ValueError(f"flow {flow.id}: bad size range")
    out: list[tuple[int, int]] = []
    if traffic.arrivals is not None:
        for t in traffic.arrivals:
            if t < horizon:
                out.append((t, flow.bs))
        return out

    def draw_size() -> int:
        if flow.tc in FIXED_SIZE_TCS or traffic.size_min == traffic.size_max:
            return flow.bs
        return int(rng.integers(traffic.size_min, traffic.size_max + 1))

    if flow.tc in RATE_DRIVEN_TCS:
        if not traffic.bitrate_bps:
            raise ValueError(f"flow {flow.id}: rate-driven class needs a bitrate")
        t = flow.bat
        while t < horizon:
            size = draw_size()
            out.append((t, size))
            t += tsn.transmission_time(size, traffic.bitrate_bps)
        return out
    if flow.tc in PERIODIC_TCS:
        t = flow.bat
        while t < horizon:
            out.append((t, draw_size()))
            t += flow.period
        return out
    # Sporadic: exponential inter-arrivals, mean = the flow's period field.
    t = flow.bat + int(rng.exponential(flow.period))
    while t < horizon:
        out.append((t, draw_size()))
        t += int(rng.exponential(flow.period))
    return out


class EgressPort:
    """Store-and-forward egress with per-class FIFO queues, optional TAS
    gating, and strict priority among open gates."""

    def __init__(self, name: str, rate_bps: int, proc_ns: int,
                 gcl: tsn.GateControlList | None, sink):
        self.name = name
        self.rate_bps = rate_bps
        self.proc_ns = proc_ns
        self.gcl = gcl
        self.sink = sink  # sink(sim, record, t_next_node)
        self.queues: dict[int, deque] = {}
        self.busy_until = -1
        self.wake_at: int | None = None

    def enqueue(self, sim: "Simulation", t: int, record: FrameRecord, cls: int) -> None:
        self.queues.setdefault(cls, deque()).append(record)
        self._kick(sim, t)

    def _heads(self) -> dict[int, int]:
        return {c: q[0].size for c, q in self.queues.items() if q}

    def _kick(self, sim: "Simulation", t: int) -> None:
        if self.busy_until > t:
            return
        heads = self._heads()
        if not heads:
            return
        if self.gcl is None:
            cls = max(heads)
        else:
            cls = tsn.egress_pick(heads, self.gcl, t, self.rate_bps)
        if cls is None:
            wake = tsn.next_gate_transition(self.gcl, t)
            if self.wake_at is None or self.wake_at > wake:
                self.wake_at = wake
                sim.push(wake, PRIO_FRAME, "port_wake", self)
            return
        record = self.queues[cls].popleft()
        done = t + tsn.transmission_time(record.size, self.rate_bps)
        self.busy_until = done
        sim.push(done, PRIO_FRAME, "port_tx_done", (self, record))

    def on_tx_done(self, sim: "Simulation", t: int, record: FrameRecord) -> None:
        self.sink(sim, record, t + self.proc_ns)
        self._kick(sim, t)

    def on_wake(self, sim: "Simulation", t: int) -> None:
        self.wake_at = None
        self._kick(sim, t)


@dataclass
class GfUe:
    """Grant-free UE: a FIFO byte buffer drained by grid reservations."""

    flow: FlowSpec
    buffer: deque = field(default_factory=deque)


@dataclass
class DynFlowCtx:
    flow: FlowSpec
    ue: UeUplinkState


@dataclass
class RunConfig:
    pattern: TddPattern
    params: DelayParams
    horizon: int
    rate_bps: int = 1_000_000_000
    proc_ns: int = 2_000
    mcs_range: McsRange = McsRange(0, 28)
    gf_mode: str = "adaptive"  # adaptive | static | none
    static_mcs: int | None = None
    discipline: Discipline = Discipline.STRICT_PRIORITY
    initial_rbs: int = 2
    pf_alpha: float = 0.01
    n_re_per_rb: int = linkadapt.DEFAULT_N_RE_PER_RB
    buffer_cap: int = 1_000_000
    init_cqi: int = 9
    step_sigma: float = 0.0
    update_period: int = 1_000_000
    sw1_gcl: tsn.GateControlList | None = None
    sw2_gcl: tsn.GateControlList | None = None
    psfp: dict[str, tsn.StreamFilter] | None = None
    hyperperiod_cap: int = 10_000_000_000


class AdmissionError(RuntimeError):
    def __init__(self, infeasible):
        self.infeasible = list(infeasible)
        super().__init__(f"grant-free pre-allocation infeasible for {self.infeasible}")


@dataclass
class LedgerRow:
    abs_slot: int
    time_ns: int
    slot: int
    label: str
    capacity: int
    gf_reserved: int
    gf_used: int
    dyn_used: int


@dataclass
class GrantEvent:
    time_ns: int
    ue_id: int
    kind: str  # initial | bsr | grantfree
    abs_slot: int
    rbs: int
    mcs: int
    bytes: int


@dataclass
class RunResult:
    records: list[FrameRecord]
    ledger: list[LedgerRow]
    grants: list[GrantEvent]
    schedule: GrantFreeSchedule | None
    reschedules: int
    reschedules_rejected: int
    deferred_initial_grants: int


class Simulation:
    def __init__(self, cfg: RunConfig, flows: list[FlowSpec],
                 traffic: dict[str, TrafficSpec], seed: int):
        self.cfg = cfg
        self.pattern = cfg.pattern
        self.flows = flows
        self.traffic = traffic
        self.seed = seed
        n_ues = max((f.ue_id for f in flows), default=-1) + 1
        self.channel = ChannelState(
            n_ue=n_ues, n_rb=cfg.pattern.n_rb, seed=seed,
            init_cqi=cfg.init_cqi, step_sigma=cfg.step_sigma,
            update_period=cfg.update_period,
        )
        self.records: list[FrameRecord] = []
        self.ledger: dict[int, LedgerRow] = {}
        self.grants_log: list[GrantEvent] = []
        self.reschedules = 0
        self.reschedules_rejected = 0
        self._heap: list = []
        self._seq = 0

        self.gf_ues: dict[str, GfUe] = {}
        self.dyn: dict[int, DynFlowCtx] = {}
        gf_flows = []
        for f in flows:
            if cfg.gf_mode != "none" and f.tc in (5, 6):
                self.gf_ues[f.id] = GfUe(flow=f)
                gf_flows.append(f)
            else:
                qos = f.qos
                if qos is None:
                    raise ValueError(f"flow {f.id}: dynamic scheduling needs a QoS profile")
                ue = UeUplinkState(ue_id=f.ue_id, qos=qos, buffer_cap=cfg.buffer_cap)
                self.dyn[f.ue_id] = DynFlowCtx(flow=f, ue=ue)

        self.schedule: GrantFreeSchedule | None = None
        self.pending_schedule: tuple[int, GrantFreeSchedule] | None = None
        if gf_flows:
            self.schedule = self._plan_grant_free(gf_flows)
            if not self.schedule.feasible:
                raise AdmissionError(self.schedule.infeasible)

        self.gnb = GnbScheduler(
            pattern=cfg.pattern,
            discipline=cfg.discipline,
            mcs_range=cfg.mcs_range,
            reserved_of=self._reserved_of,
            initial_rbs=cfg.initial_rbs,
            pf_alpha=cfg.pf_alpha,
            n_re_per_rb=cfg.n_re_per_rb,
        )
        self.dyn_grants_by_slot: dict[int, list[tuple[int, object]]] = {}

        self._ue_by_flow = {f.id: f.ue_id for f in flows}
        listener = lambda sim, rec, t: self._on_listener(rec, t)
        self.sw2 = EgressPort("SW2", cfg.rate_bps, cfg.proc_ns, cfg.sw2_gcl, listener)
        self.sw1_ports: dict[str, EgressPort] = {
            f.id: EgressPort(
                f"SW1:{f.id}", cfg.rate_bps, cfg.proc_ns, cfg.sw1_gcl,
                lambda sim, rec, t: self._on_ue_ingress(rec, t),
            )
            for f in flows
        }

    # -- planning ---------------------------------------------------------

    def _gf_range(self) -> McsRange:
        if self.cfg.gf_mode == "static":
            if self.cfg.static_mcs is None:
                raise ValueError("static grant-free mode needs static_mcs")
            return McsRange(self.cfg.static_mcs, self.cfg.static_mcs)
        return self.cfg.mcs_range

    def _plan_grant_free(self, gf_flows) -> GrantFreeSchedule:
        return preallocate(
            gf_flows, self.pattern, self.channel, self._gf_range(),
            self.cfg.params, hyperperiod_cap=self.cfg.hyperperiod_cap,
            n_re_per_rb=self.cfg.n_re_per_rb,
        )

    def _reserved_of(self, abs_slot: int):
        if self.schedule is None:
            return ()
        grid = self.schedule.grid
        cap = grid.capacity(abs_slot)
        free = set(grid.free_rbs(abs_slot))
        return tuple(rb for rb in range(cap) if rb not in free)

    # -- event machinery ---------------------------------------------------

    def push(self, t: int, prio: int, kind: str, data=None) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, prio, self._seq, kind, data))

    def run(self) -> RunResult:
        cfg = self.cfg
        for idx, f in enumerate(self.flows):
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence([self.seed, 0xA11CE, idx])))
            for t, size in generate_traffic(f, self.traffic[f.id], cfg.horizon, rng):
                # Generated times are bridge-ingress targets; back the
                # emission off by the access wiring so an uncontended frame
                # reaches the UE-side translator exactly on target.
                hop = tsn.transmission_time(size, cfg.rate_bps) + cfg.proc_ns
                emit = max(0, t - 2 * hop)
                rec = FrameRecord(flow_id=f.id, seq_no=len(self.records), tc=f.tc,
                                  size=size, t_talker=emit)
                self.records.append(rec)
                self.push(emit, PRIO_FRAME, "talker_emit", rec)
        # Re-number per flow for readability.
        counters: dict[str, int] = {}
        for rec in sorted(self.records, key=lambda r: (r.flow_id, r.t_talker)):
            rec.seq_no = counters.get(rec.flow_id, 0)
            counters[rec.flow_id] = rec.seq_no + 1

        if cfg.step_sigma > 0:
            t = cfg.update_period
            while t <= cfg.horizon:
                self.push(t, PRIO_CHANNEL, "channel_update")
                t += cfg.update_period
        self.push(0, PRIO_CYCLE, "cycle_start", 0)

        last_t = -1
        while self._heap:
            t, prio, _, kind, data = heapq.heappop(self._heap)
            if t > cfg.horizon:
                continue
            if t < last_t:
                raise AssertionError("event dispatched out of order")
            last_t = t
            if kind == "channel_update":
                self.channel.step()
            elif kind == "cycle_start":
                self._on_cycle_start(t, data)
            elif kind == "slot_start":
                self._on_slot_start(t, data)
            elif kind == "talker_emit":
                self._on_talker_emit(data, t)
            elif kind == "sw1_ingress":
                self._on_sw1_ingress(data, t)
            elif kind == "port_tx_done":
                port, rec = data
                port.on_tx_done(self, t, rec)
            elif kind == "port_wake":
                data.on_wake(self, t)
            elif kind == "ue_mac_arrival":
                self._on_ue_mac_arrival(data, t)
            elif kind == "bridge_egress":
                self._on_bridge_egress(data, t)
            elif kind == "sw2_ingress":
                rec, cls = data
                self.sw2.enqueue(self, t, rec, cls)
            else:
                raise AssertionError(f"unknown event kind {kind}")

        for rec in self.records:
            if rec.fate is None:
                rec.fate = "in_flight"
        return RunResult(
            records=self.records,
            ledger=[self.ledger[k] for k in sorted(self.ledger)],
            grants=self.grants_log,
            schedule=self.schedule,
            reschedules=self.reschedules,
            reschedules_rejected=self.reschedules_rejected,
            deferred_initial_grants=self.gnb.deferred_initial_grants,
        )

    # -- wired path --------------------------------------------------------

    def _on_talker_emit(self, rec: FrameRecord, t: int) -> None:
        arrive = t + tsn.transmission_time(rec.size, self.cfg.rate_bps) + self.cfg.proc_ns
        self.push(arrive, PRIO_FRAME, "sw1_ingress", rec)

    def _on_sw1_ingress(self, rec: FrameRecord, t: int) -> None:
        cls = rec.tc
        flt = (self.cfg.psfp or {}).get(rec.flow_id)
        if flt is not None:
            decision = tsn.psfp_filter(flt, rec.size, cls, t)
            if not decision.passed:
                rec.fate = "dropped_gate" if decision.drop_reason == "gate" else "dropped_meter"
                return
            cls = decision.effective_class
        self.sw1_ports[rec.flow_id].enqueue(self, t, rec, cls)

    def _on_ue_ingress(self, rec: FrameRecord, t: int) -> None:
        rec.t_ue_ingress = t
        self.push(t + self.cfg.params.delta, PRIO_FRAME, "ue_mac_arrival", rec)

    def _on_ue_mac_arrival(self, rec: FrameRecord, t: int) -> None:
        if rec.flow_id in self.gf_ues:
            self.gf_ues[rec.flow_id].buffer.append(
                BufferedFrame(seq_no=rec.seq_no, size=rec.size, remaining=rec.size,
                              arrived=t, record=rec))
            return
        ctx = self.dyn[self._ue_by_flow[rec.flow_id]]
        frame = BufferedFrame(seq_no=rec.seq_no, size=rec.size, remaining=rec.size,
                              arrived=t, record=rec)
        if not ctx.ue.on_arrival(frame):
            rec.fate = "dropped_overflow"

    # -- 5G segment --------------------------------------------------------

    def _on_cycle_start(self, t: int, frame_idx: int) -> None:
        cfg = self.cfg
        pattern = self.pattern
        if t + pattern.t_tdd <= cfg.horizon:
            self.push(t + pattern.t_tdd, PRIO_CYCLE, "cycle_start", frame_idx + 1)
        for s in range(pattern.n_slots):
            start = t + s * pattern.t_slot
            if start <= cfg.horizon and pattern.is_ul_capable(s):
                self.push(start, PRIO_SLOT, "slot_start",
                          frame_idx * pattern.n_slots + s)

        # Activate a pending grant-free grid exactly at hyperperiod edges.
        if self.pending_schedule is not None:
            when, sched = self.pending_schedule
            if t >= when:
                self.schedule = sched
                self.pending_schedule = None
        if (self.schedule is not None and cfg.gf_mode == "adaptive"
                and self.pending_schedule is None and cfg.step_sigma > 0
                and needs_reschedule(self.schedule, self.channel)):
            candidate = self._plan_grant_free([gf.flow for gf in self.gf_ues.values()])
            if candidate.feasible:
                hp = self.schedule.hyperperiod
                activate = ((t // hp) + 1) * hp
                self.pending_schedule = (activate, candidate)
                self.reschedules += 1
            else:
                self.reschedules_rejected += 1

        if self.dyn:
            ues = {uid: ctx.ue for uid, ctx in self.dyn.items()}
            plan = self.gnb.plan_cycle(frame_idx, ues, self.channel, t)
            for abs_slot, grants in plan.items():
                if grants:
                    self.dyn_grants_by_slot.setdefault(abs_slot, []).extend(grants)
                for ue_id, grant in grants:
                    ue = self.dyn[ue_id].ue
                    ue.pending_grants.append(grant)
                    if grant.kind == "initial":
                        ue.sr_outstanding = False

    def _on_slot_start(self, t: int, abs_slot: int) -> None:
        pattern = self.pattern
        slot_idx = abs_slot % pattern.n_slots
        slot_end = t + pattern.t_slot
        row = self._ledger_row(abs_slot, t)

        if self.dyn:
            dropped = rlc_pdb_drop((c.ue for c in self.dyn.values()), t,
                                   self.cfg.discipline)
            for _, fr in dropped:
                fr.record.fate = "dropped_pdb"
            # SRs ride the control channel of any UL-capable slot.
            for uid in sorted(self.dyn):
                if self.dyn[uid].ue.take_sr():
                    self.gnb.on_sr(uid)

        if self.schedule is not None:
            self._gf_transmissions(t, abs_slot, slot_end, row)
        if self.dyn:
            self._dyn_transmissions(t, abs_slot, slot_end, row)

    def _gf_transmissions(self, t: int, abs_slot: int, slot_end: int, row: LedgerRow) -> None:
        sched = self.schedule
        grid_slot = abs_slot % sched.grid.n_slots
        row.gf_reserved = sched.grid.used(grid_slot)
        entries = sched.by_slot.get(grid_slot, ())
        for inst, alloc in sorted(entries, key=lambda e: e[0].flow_id):
            gf = self.gf_ues.get(inst.flow_id)
            if gf is None or not gf.buffer:
                continue
            capacity = linkadapt.tbs(alloc.mcs, len(alloc.rbs), self.cfg.n_re_per_rb)
            sent, touched, finished = _drain(gf.buffer, capacity, t)
            if sent == 0:
                continue
            row.gf_used += len(alloc.rbs)
            self.grants_log.append(GrantEvent(
                time_ns=t, ue_id=gf.flow.ue_id, kind="grantfree",
                abs_slot=abs_slot, rbs=len(alloc.rbs), mcs=alloc.mcs, bytes=sent))
            eff, _ = linkadapt.effective_mcs(
                self.channel.cqi_of(gf.flow.ue_id, alloc.rbs), RADIO_RANGE)
            if linkadapt.transmit_outcome(alloc.mcs, eff):
                for fr in finished:
                    self.push(slot_end, PRIO_DELIVERY, "bridge_egress", fr.record)
            else:
                _discard(gf.buffer, touched)
                for fr in touched:
                    fr.record.fate = "lost_radio"

    def _dyn_transmissions(self, t: int, abs_slot: int, slot_end: int, row: LedgerRow) -> None:
        grants = self.dyn_grants_by_slot.pop(abs_slot, ())
        for ue_id, grant in grants:
            ctx = self.dyn[ue_id]
            ue = ctx.ue
            if grant in ue.pending_grants:
                ue.pending_grants.remove(grant)
            capacity = linkadapt.tbs(grant.mcs, len(grant.rbs), self.cfg.n_re_per_rb)
            sent, touched, finished = _drain(ue.buffer, capacity, t)
            if sent == 0:
                # Nothing to send: the grant goes unused, backlog report stands.
                continue
            ue.buffered_bytes -= sent
            row.dyn_used += len(grant.rbs)
            self.grants_log.append(GrantEvent(
                time_ns=t, ue_id=ue_id, kind=grant.kind, abs_slot=abs_slot,
                rbs=len(grant.rbs), mcs=grant.mcs, bytes=sent))
            eff, _ = linkadapt.effective_mcs(
                self.channel.cqi_of(ue_id, grant.rbs), RADIO_RANGE)
            if linkadapt.transmit_outcome(grant.mcs, eff):
                for fr in finished:
                    self.push(slot_end, PRIO_DELIVERY, "bridge_egress", fr.record)
                ue.last_reported_backlog = ue.buffered_bytes
                self.gnb.on_bsr(ue_id, ue.buffered_bytes)
            else:
                # The whole transport block is gone, including its BSR.
                _discard(ue.buffer, touched)
                lost_bytes = sum(fr.remaining for fr in touched)
                ue.buffered_bytes -= lost_bytes
                for fr in touched:
                    fr.record.fate = "lost_radio"

    def _on_bridge_egress(self, rec: FrameRecord, t: int) -> None:
        rec.t_gnb_egress = t
        arrive = t + tsn.transmission_time(rec.size, self.cfg.rate_bps) + self.cfg.proc_ns
        self.push(arrive, PRIO_FRAME, "sw2_ingress", (rec, rec.tc))

    def _on_listener(self, rec: FrameRecord, t: int) -> None:
        rec.t_listener = t
        rec.fate = "delivered"

    def _ledger_row(self, abs_slot: int, t: int) -> LedgerRow:
        row = self.ledger.get(abs_slot)
        if row is None:
            slot_idx = abs_slot % self.pattern.n_slots
            row = LedgerRow(
                abs_slot=abs_slot, time_ns=t, slot=slot_idx,
                label=self.pattern.labels[slot_idx].value,
                capacity=self.pattern.capacity(slot_idx),
                gf_reserved=0, gf_used=0, dyn_used=0,
            )
            self.ledger[abs_slot] = row
        return row


def _drain(buffer: deque, capacity: int, now: int):
    """Plan a FIFO drain of frames available by `now`, mutating the buffer.

    Returns (bytes sent, frames touched, frames finished). Head-of-line
    order is preserved: an unavailable head blocks the queue.
    """
    sent = 0
    touched: list[BufferedFrame] = []
    finished: list[BufferedFrame] = []
    while buffer and sent < capacity:
        head = buffer[0]
        if head.arrived > now:
            break
        take = min(head.remaining, capacity - sent)
        if take == 0:
            break
        head.remaining -= take
        sent += take
        if head not in touched:
            touched.append(head)
        if head.remaining == 0:
            buffer.popleft()
            finished.append(head)
    return sent, touched, finished


def _discard(buffer: deque, touched) -> None:
    """Drop the frames corrupted by a failed transport block."""
    for fr in touched:
        if fr.remaining > 0 and buffer and buffer[0] is fr:
            buffer.popleft()


# -- metrics ---------------------------------------------------------------


def metric_per(records, max_path_delay: dict[int, int],
               horizon: int | None = None) -> dict[int, float | None]:
    """Per-TC percentage of frames NOT received within the reported path
    budget. Lost and dropped frames count as late; frames whose budget
    window extends past the simulation horizon are indeterminate and left
    out of the denominator."""
    sent: dict[int, int] = {}
    on_time: dict[int, int] = {}
    for rec in records:
        budget = max_path_delay.get(rec.tc)
        if budget is not None and horizon is not None and rec.t_talker + budget > horizon:
            continue
        sent[rec.tc] = sent.get(rec.tc, 0) + 1
        if budget is None or rec.t_listener is None:
            continue
        if rec.t_listener - rec.t_talker <= budget:
            on_time[rec.tc] = on_time.get(rec.tc, 0) + 1
    out: dict[int, float | None] = {}
    for tc, n in sent.items():
        out[tc] = None if n == 0 else 100.0 * (1.0 - on_time.get(tc, 0) / n)
    return out


def metric_rb_utilization(ledger) -> float | None:
    """Used RB-slots over schedulable UL capacity, in percent."""
    total = sum(row.capacity for row in ledger)
    used = sum(row.gf_used + row.dyn_used for row in ledger)
    if total == 0:
        return None
    return 100.0 * used / total


def metric_throughput_cv(records, flows, horizon: int,
                         window: int = 1_000_000_000) -> dict[int, float | None]:
    """Per-TC mean coefficient of variation of 1 s delivered throughput.

    CV per UE = population stddev / mean of per-window delivered bytes;
    UEs with zero mean (or fewer than two windows) are skipped.
    """
    n_windows = horizon // window
    if n_windows < 2:
        return {}
    per_flow: dict[str, list[int]] = {f.id: [0] * n_windows for f in flows}
    for rec in records:
        if rec.fate != "delivered" or rec.t_listener is None:
            continue
        w = rec.t_listener // window
        if w < n_windows:
            per_flow[rec.flow_id][w] += rec.size
    tc_of = {f.id: f.tc for f in flows}
    cvs: dict[int, list[float]] = {}
    for flow_id, buckets in per_flow.items():
        arr = np.asarray(buckets, dtype=float)
        mean = arr.mean()
        if mean == 0:
            continue
        cv = float(arr.std() / mean)
        cvs.setdefault(tc_of[flow_id], []).append(cv)
    return {tc: (sum(v) / len(v) if v else None) for tc, v in cvs.items()}


def metric_delay_stats(records) -> dict[int, dict[str, float]]:
    """Per-TC end-to-end delay stats over delivered frames.

    Percentiles use the nearest-rank rule: the ceil(p/100 * N)-th smallest
    sample.
    """
    delays: dict[int, list[int]] = {}
    for rec in records:
        if rec.fate == "delivered" and rec.t_listener is not None:
            delays.setdefault(rec.tc, []).append(rec.t_listener - rec.t_talker)
    out: dict[int, dict[str, float]] = {}
    for tc, xs in delays.items():
        xs.sort()
        out[tc] = {
            "count": len(xs),
            "mean": sum(xs) / len(xs),
            "min": xs[0],
            "max": xs[-1],
            "p99": _nearest_rank(xs, 99.0),
            "p99_9": _nearest_rank(xs, 99.9),
        }
    return out


def _nearest_rank(sorted_xs, p: float):
    n = len(sorted_xs)
    rank = max(1, -(-int(p * n) // 100))
    return sorted_xs[min(rank, n) - 1]


def path_budget(flows, pattern: TddPattern, params: DelayParams,
                rate_bps: int = 1_000_000_000, proc_ns: int = 2_000) -> dict[int, int]:
    """Per-TC worst-case path delay the network reports: access wiring,
    SW1 residence (dedicated egress per UE, so no queuing), the 5G
    bounds from the class table, and SW2 residence at the shared egress
    with same-or-higher class serialization plus one lower-class frame in
    flight (no preemption).

    TC 4's tighter burst-size-known bound applies only when some TC 4
    profile actually carries an MDBV.
    """
    by_tc: dict[int, list[FlowSpec]] = {}
    for f in flows:
        by_tc.setdefault(f.tc, []).append(f)
    budgets: dict[int, int] = {}
    for tc, members in by_tc.items():
        size = max(f.bs for f in members)
        tx = tsn.transmission_time(size, rate_bps)
        rep = bd_for_tc(tc, pattern, params, flow=members[0])
        bd5g = rep.bounds.max
        if tc == 4 and not any(f.qos and f.qos.mdbv for f in members):
            bd5g = dynamic_bd_bounds(pattern, params, bs_known=False).max
        serialization = sum(
            tsn.transmission_time(g.bs, rate_bps) for g in flows if g.tc >= tc
        ) - tx
        lower_block = max(
            (tsn.transmission_time(g.bs, rate_bps) for g in flows if g.tc < tc),
            default=0,
        )
        access = tx + proc_ns  # talker wire into SW1
        sw1 = tx + proc_ns  # dedicated port: residence is just forwarding
        bridge_wire = tx + proc_ns  # gNB egress wire into SW2
        sw2 = serialization + lower_block + tx + proc_ns
        budgets[tc] = access + sw1 + bd5g + bridge_wire + sw2
    return budgets
