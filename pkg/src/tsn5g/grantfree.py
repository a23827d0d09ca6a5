"""Grant-free pre-allocation of uplink resources for periodic flows.

Resources are reserved over one hyperperiod (lcm of the TDD cycle and all
flow periods). Newly arrived flow instances get a scheduling window sized
from their maximum bridge delay; open instances are served earliest
deadline first, ties broken toward UEs with fewer usable RBs; RBs are
taken from the eligible set (CQI at or above the candidate mean) in
ascending index order. Class 6 instances are pinned to the single slot
that satisfies their jitter-free preconditions.

Windows anchor at the first slot boundary at or after the instance's
arrival at the UE (burst arrival time plus the TT-UE forwarding delay),
so a schedule exists exactly when every instance fits its deadline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from . import linkadapt
from .bridge_delay import DelayParams, jitter_free_slot
from .linkadapt import McsRange
from .timebase import TddPattern, ul_opportunities_in

if TYPE_CHECKING:
    from .dynamic import QosProfile

DEFAULT_HYPERPERIOD_CAP = 10_000_000_000  # 10 s


class HyperperiodError(ValueError):
    pass


@dataclass(frozen=True)
class FlowSpec:
    """One time-sensitive stream: arrival phase, burst size, period, class."""

    id: str
    bat: int
    bs: int
    period: int
    tc: int
    ue_id: int
    qos: "QosProfile | None" = None

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError(f"flow {self.id}: period must be > 0")
        if self.bs <= 0:
            raise ValueError(f"flow {self.id}: burst size must be > 0")
        if self.tc not in range(8):
            raise ValueError(f"flow {self.id}: traffic class {self.tc} outside [0, 7]")
        if self.bat < 0:
            raise ValueError(f"flow {self.id}: burst arrival time must be >= 0")


@dataclass
class FlowSchedState:
    """Mutable per-flow scheduling state while the pre-allocation runs."""

    bs_req: int
    bat_frame: int
    bat_slot: int
    window: int | None = None  # None: instance not arrived yet


def reset_flow(flow: FlowSpec, pattern: TddPattern, arrival: int | None = None) -> FlowSchedState:
    """Locate a flow's arrival on the slot calendar and reset its demand.

    The arrival slot is rounded up: a burst landing inside a slot can only
    be transmitted from the next slot boundary on.
    """
    t = flow.bat if arrival is None else arrival
    bat_frame, rem = divmod(t, pattern.t_tdd)
    bat_slot = -(-rem // pattern.t_slot)
    if bat_slot == pattern.n_slots:
        bat_frame += 1
        bat_slot = 0
    return FlowSchedState(bs_req=flow.bs, bat_frame=bat_frame, bat_slot=bat_slot)


def hyperperiod(pattern: TddPattern, flows, cap: int = DEFAULT_HYPERPERIOD_CAP) -> int:
    """lcm of the TDD cycle and all flow periods, in nanoseconds."""
    hp = pattern.t_tdd
    for f in flows:
        hp = math.lcm(hp, f.period)
        if hp > cap:
            raise HyperperiodError(
                f"hyperperiod exceeds {cap} ns after flow {f.id} "
                f"(period {f.period} ns); stagger periods or raise the cap"
            )
    return hp


def window_slots(pattern: TddPattern, arrival: int, max_bd: int) -> int:
    """Number of UL-capable slots whose start lies in [arrival, arrival + max_bd)."""
    if max_bd < pattern.t_slot:
        raise ValueError("max_bd must be at least one slot")
    return len(ul_opportunities_in(pattern, arrival, max_bd))


def calc_rbs(free_rbs_with_cqi, bs_req: int, mcs_range: McsRange,
             n_re_per_rb: int = linkadapt.DEFAULT_N_RE_PER_RB):
    """Pick RBs for one transmission from a slot's free set.

    free_rbs_with_cqi is a sequence of (rb_index, cqi) pairs in ascending
    index order. Returns (rb tuple, mcs, bytes_served); with no free RB the
    result is ((), None, 0). The smallest prefix of the eligible RBs whose
    TBS covers bs_req is taken, or every eligible RB when demand exceeds
    them all.
    """
    pairs = list(free_rbs_with_cqi)
    if not pairs or bs_req <= 0:
        return (), None, 0
    mcs, eligible_pos = linkadapt.effective_mcs([c for _, c in pairs], mcs_range)
    candidates = [pairs[i][0] for i in eligible_pos]
    need = linkadapt.min_rbs_for(bs_req, mcs, len(candidates), n_re_per_rb)
    take = len(candidates) if need is None else need
    chosen = tuple(candidates[:take])
    served = min(linkadapt.tbs(mcs, len(chosen), n_re_per_rb), bs_req)
    return chosen, mcs, served


class ResourceGrid:
    """Per-slot, per-RB ownership over one hyperperiod of the pattern."""

    def __init__(self, pattern: TddPattern, cycles: int):
        self.pattern = pattern
        self.cycles = cycles
        self.n_slots = cycles * pattern.n_slots
        self._owner: dict[tuple[int, int], tuple[str, int]] = {}
        self._used: dict[int, int] = {}

    def capacity(self, slot: int) -> int:
        return self.pattern.capacity(slot % self.pattern.n_slots)

    def free_rbs(self, slot: int) -> list[int]:
        slot %= self.n_slots
        cap = self.capacity(slot)
        return [rb for rb in range(cap) if (slot, rb) not in self._owner]

    def owner(self, slot: int, rb: int):
        return self._owner.get((slot % self.n_slots, rb))

    def reserve(self, slot: int, rbs, flow_id: str, mcs: int) -> None:
        slot %= self.n_slots
        cap = self.capacity(slot)
        if cap == 0:
            raise ValueError(f"slot {slot} is not UL-capable")
        for rb in rbs:
            if rb >= cap:
                raise ValueError(f"RB {rb} beyond slot {slot} capacity {cap}")
            if (slot, rb) in self._owner:
                raise ValueError(f"RB {rb} of slot {slot} already owned")
        for rb in rbs:
            self._owner[(slot, rb)] = (flow_id, mcs)
        self._used[slot] = self._used.get(slot, 0) + len(rbs)

    def used(self, slot: int) -> int:
        return self._used.get(slot % self.n_slots, 0)

    def reserved_entries(self):
        return dict(self._owner)


@dataclass(frozen=True)
class Allocation:
    abs_slot: int  # unwrapped slot counter from the hyperperiod start
    grid_slot: int  # abs_slot modulo the grid length
    rbs: tuple[int, ...]
    mcs: int
    bytes_served: int


@dataclass
class InstanceSchedule:
    flow_id: str
    instance: int
    arrival: int  # quantized UE-availability time (slot boundary), ns
    deadline: int  # arrival + pattern-level span the window covers, ns
    allocations: list[Allocation] = field(default_factory=list)
    served: int = 0
    feasible: bool = True


@dataclass
class GrantFreeSchedule:
    pattern: TddPattern
    grid: ResourceGrid
    hyperperiod: int
    mcs_range: McsRange
    params: DelayParams
    instances: list[InstanceSchedule]
    infeasible: list[tuple[str, int]]
    by_slot: dict[int, list[tuple[InstanceSchedule, Allocation]]]
    flow_ues: dict[str, int]

    @property
    def feasible(self) -> bool:
        return not self.infeasible


@dataclass
class _OpenFlow:
    flow: FlowSpec
    state: FlowSchedState
    single_slot: int | None  # pinned slot index for jitter-free class 6
    next_instance: int
    n_instances: int
    instance: InstanceSchedule | None = None

    def arrival_time(self, pattern: TddPattern) -> int:
        return self.state.bat_frame * pattern.t_tdd + self.state.bat_slot * pattern.t_slot


def preallocate(flows, pattern: TddPattern, channel_cqi, mcs_range: McsRange,
                params: DelayParams | None = None,
                hyperperiod_cap: int = DEFAULT_HYPERPERIOD_CAP,
                n_re_per_rb: int = linkadapt.DEFAULT_N_RE_PER_RB) -> GrantFreeSchedule:
    """Reserve RBs for every instance of every grant-free flow in one
    hyperperiod.

    channel_cqi maps (ue_id, rb) to a CQI; an object with a ``cqi_of``
    method (ChannelState) or a 2D array indexed [ue_id][rb] both work.
    Instances whose demand is not met inside their window are reported in
    the schedule's infeasible list, not raised.
    """
    params = params or DelayParams()
    flows = list(flows)
    for f in flows:
        if f.tc not in (5, 6):
            raise ValueError(f"flow {f.id}: grant-free pre-allocation covers TC 5 and 6 only")
    hp = hyperperiod(pattern, flows, hyperperiod_cap)
    cycles = hp // pattern.t_tdd
    grid = ResourceGrid(pattern, cycles)
    hp_slots = grid.n_slots
    span = pattern.t_tdd + pattern.t_slot  # window span past the arrival boundary
    cqi_of = _cqi_lookup(channel_cqi)

    open_flows: list[_OpenFlow] = []
    for f in flows:
        pinned = None
        if f.tc == 6:
            pinned = jitter_free_slot(f.bat, f.period, pattern, params)
        phase = f.bat % f.period
        state = reset_flow(f, pattern, arrival=phase + params.delta)
        open_flows.append(_OpenFlow(
            flow=f, state=state, single_slot=pinned,
            next_instance=0, n_instances=hp // f.period,
        ))

    instances: list[InstanceSchedule] = []
    infeasible: list[tuple[str, int]] = []

    # Tail windows may spill past the hyperperiod; they wrap onto the early
    # grid slots (the schedule repeats), so iterate a little further.
    overhang = 2 * pattern.n_slots + 2
    for abs_slot in range(hp_slots + overhang):
        slot_idx = abs_slot % pattern.n_slots
        if not pattern.is_ul_capable(slot_idx):
            continue
        slot_start = abs_slot * pattern.t_slot

        # Open windows for instances that have arrived.
        for of in open_flows:
            if of.instance is not None or of.next_instance >= of.n_instances:
                continue
            arrival = of.arrival_time(pattern)
            if arrival > slot_start:
                continue
            if of.single_slot is not None:
                if slot_idx != of.single_slot:
                    continue
                window = 1
                deadline = slot_start + pattern.t_slot
            else:
                horizon = arrival + span - slot_start
                window = len(ul_opportunities_in(pattern, slot_start, horizon)) if horizon > 0 else 0
                deadline = arrival + span
            of.state.window = window
            of.instance = InstanceSchedule(
                flow_id=of.flow.id, instance=of.next_instance,
                arrival=arrival, deadline=deadline,
            )

        active = [of for of in open_flows if of.instance is not None]
        if not active:
            if abs_slot >= hp_slots:
                break
            continue

        free = grid.free_rbs(abs_slot)
        ranked = _sort_by_constrainedness(active, free, cqi_of, mcs_range)

        for of in ranked:
            st = of.state
            if st.bs_req > 0 and st.window > 0:
                pairs = [(rb, cqi_of(of.flow.ue_id, rb)) for rb in grid.free_rbs(abs_slot)]
                rbs, mcs, served = calc_rbs(pairs, st.bs_req, mcs_range, n_re_per_rb)
                if rbs:
                    grid.reserve(abs_slot, rbs, of.flow.id, mcs)
                    of.instance.allocations.append(Allocation(
                        abs_slot=abs_slot, grid_slot=abs_slot % hp_slots,
                        rbs=rbs, mcs=mcs, bytes_served=served,
                    ))
                    of.instance.served += served
                    st.bs_req -= served
            st.window -= 1
            if st.window < 1 or st.bs_req <= 0:
                if st.bs_req > 0:
                    of.instance.feasible = False
                    infeasible.append((of.flow.id, of.instance.instance))
                instances.append(of.instance)
                of.instance = None
                of.next_instance += 1
                phase = of.flow.bat % of.flow.period
                arrival = phase + of.next_instance * of.flow.period + params.delta
                of.state = reset_flow(of.flow, pattern, arrival=arrival)

    by_slot: dict[int, list[tuple[InstanceSchedule, Allocation]]] = {}
    for inst in instances:
        for alloc in inst.allocations:
            by_slot.setdefault(alloc.grid_slot, []).append((inst, alloc))
    instances.sort(key=lambda i: (i.flow_id, i.instance))

    return GrantFreeSchedule(
        pattern=pattern, grid=grid, hyperperiod=hp, mcs_range=mcs_range,
        params=params, instances=instances, infeasible=sorted(infeasible),
        by_slot=by_slot, flow_ues={f.id: f.ue_id for f in flows},
    )


def _cqi_lookup(channel_cqi):
    if hasattr(channel_cqi, "cqi"):
        grid = channel_cqi.cqi
        return lambda ue, rb: int(grid[ue][rb])
    return lambda ue, rb: int(channel_cqi[ue][rb])


def _sort_by_constrainedness(active, free_rbs, cqi_of, mcs_range):
    """Ascending remaining window, then fewer eligible RBs, then flow id."""
    def key(of: _OpenFlow):
        if free_rbs:
            cqis = [cqi_of(of.flow.ue_id, rb) for rb in free_rbs]
            _, eligible = linkadapt.effective_mcs(cqis, mcs_range)
            n_eligible = len(eligible)
        else:
            n_eligible = 0
        return (of.state.window, n_eligible, of.flow.id)

    return sorted(active, key=key)


def sort_by_constrainedness(flows_with_state, free_rbs_with_cqi_per_flow, mcs_range: McsRange):
    """Standalone ordering used by the pre-allocator, exposed for tests.

    flows_with_state: sequence of (FlowSpec, FlowSchedState) with open
    windows. free_rbs_with_cqi_per_flow: flow id -> CQI list over the
    slot's free RBs.
    """
    def key(item):
        flow, state = item
        if state.window is None:
            raise ValueError(f"flow {flow.id} has no open window")
        cqis = free_rbs_with_cqi_per_flow.get(flow.id, [])
        if cqis:
            _, eligible = linkadapt.effective_mcs(cqis, mcs_range)
            n_eligible = len(eligible)
        else:
            n_eligible = 0
        return (state.window, n_eligible, flow.id)

    return sorted(flows_with_state, key=key)


def admission_check(flows, pattern: TddPattern, mcs_min: int,
                    params: DelayParams | None = None,
                    hyperperiod_cap: int = DEFAULT_HYPERPERIOD_CAP):
    """Worst-case schedulability: every UE pinned at the weakest channel
    still mapping to mcs_min, with the MCS locked to mcs_min.

    Returns the (feasible, infeasible-instance list) pair of the resulting
    schedule.
    """
    linkadapt.check_mcs(mcs_min)
    pin_cqi = next(
        c for c in range(linkadapt.CQI_MIN, linkadapt.CQI_MAX + 1)
        if linkadapt.CQI_TO_MCS[c - 1] >= mcs_min
    )
    n_ues = max((f.ue_id for f in flows), default=0) + 1
    cqi = [[pin_cqi] * pattern.n_rb for _ in range(n_ues)]
    schedule = preallocate(
        flows, pattern, cqi, McsRange(mcs_min, mcs_min), params,
        hyperperiod_cap=hyperperiod_cap,
    )
    return schedule.feasible, schedule.infeasible


def needs_reschedule(schedule: GrantFreeSchedule, channel) -> bool:
    """True when some reserved allocation can no longer be sustained: its
    stored MCS exceeds what the channel now supports on those RBs, or the
    supportable TBS fell below the allocation's byte share.

    Channel improvements never trigger rescheduling.
    """
    cqi_of = _cqi_lookup(channel)
    for inst in schedule.instances:
        ue = schedule.flow_ues.get(inst.flow_id)
        if ue is None:
            continue
        for alloc in inst.allocations:
            cqis = [cqi_of(ue, rb) for rb in alloc.rbs]
            eff, _ = linkadapt.effective_mcs(cqis, schedule.mcs_range)
            if alloc.mcs > eff:
                return True
            if linkadapt.tbs(eff, len(alloc.rbs)) < alloc.bytes_served:
                return True
    return False
