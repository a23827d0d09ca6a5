"""Grant-based uplink scheduling: SR/BSR signaling and the residual-RB
disciplines.

Timing model: a UE with fresh data and no grant transmits an SR in the
next UL-capable slot; the gNB processes SRs and buffer reports at TDD
cycle boundaries and issues grants for the upcoming cycle. An SR earns an
initial grant in the cycle's first UL-capable slot (sized from the
profile's MDBV when present, else a configured RB count); reported
backlog is served from whatever RBs the grant-free reservations left
over, ordered by the selected discipline.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

from . import linkadapt
from .linkadapt import McsRange
from .timebase import SlotRef, TddPattern

DEFAULT_INITIAL_RBS = 2
DEFAULT_PF_ALPHA = 0.01
DEFAULT_BUFFER_CAP = 1_000_000  # bytes per UE


class ResourceType(enum.Enum):
    DC_GBR = "dc_gbr"
    GBR = "gbr"
    NON_GBR = "non_gbr"


class Discipline(enum.Enum):
    STRICT_PRIORITY = "priority"
    MAX_CI = "max_ci"
    PROPORTIONAL_FAIR = "pf"
    PDB_PRIORITY = "pdb"


@dataclass(frozen=True)
class QosProfile:
    """5G QoS profile subset the scheduler consumes."""

    priority: int
    pdb: int
    mdbv: int | None = None
    resource_type: ResourceType = ResourceType.NON_GBR

    def __post_init__(self):
        if self.pdb <= 0:
            raise ValueError("pdb must be > 0")
        if self.mdbv is not None and self.mdbv <= 0:
            raise ValueError("mdbv must be > 0 when present")


@dataclass(frozen=True)
class Grant:
    slot: SlotRef
    rbs: tuple[int, ...]
    mcs: int
    kind: str  # "initial" or "bsr"


@dataclass
class BufferedFrame:
    seq_no: int
    size: int
    remaining: int
    arrived: int  # UE ingress time, ns
    record: object = None  # simulation-side frame record, if any


@dataclass
class UeUplinkState:
    """Device-side uplink state for one UE (one stream)."""

    ue_id: int
    qos: QosProfile
    buffer: deque[BufferedFrame] = field(default_factory=deque)
    buffered_bytes: int = 0
    sr_pending: bool = False  # SR queued, waiting for a UL-capable slot
    sr_outstanding: bool = False  # SR transmitted, grant not seen yet
    last_reported_backlog: int = 0
    pending_grants: list[Grant] = field(default_factory=list)
    buffer_cap: int = DEFAULT_BUFFER_CAP
    overflow_drops: int = 0

    def on_arrival(self, frame: BufferedFrame) -> bool:
        """Buffer a frame; returns False when the buffer cap rejects it.

        Raises the SR flag only when no grant is pending, no SR is in
        flight, and the gNB believes this UE is idle.
        """
        if self.buffered_bytes + frame.size > self.buffer_cap:
            self.overflow_drops += 1
            return False
        self.buffer.append(frame)
        self.buffered_bytes += frame.size
        if (not self.pending_grants and not self.sr_outstanding
                and not self.sr_pending and self.last_reported_backlog == 0):
            self.sr_pending = True
        return True

    def take_sr(self) -> bool:
        """Consume the queued SR at a UL-capable slot, if any."""
        if not self.sr_pending:
            return False
        self.sr_pending = False
        self.sr_outstanding = True
        return True

    def drain(self, capacity: int, now: int):
        """Serve up to capacity bytes FIFO; returns (bytes, finished frames).

        Partially sent frames stay at the head with reduced remaining size.
        """
        sent = 0
        finished: list[tuple[BufferedFrame, int]] = []
        while self.buffer and sent < capacity:
            head = self.buffer[0]
            take = min(head.remaining, capacity - sent)
            head.remaining -= take
            sent += take
            if head.remaining == 0:
                self.buffer.popleft()
                finished.append((head, now))
        self.buffered_bytes -= sent
        return sent, finished

    def drop_expired(self, now: int) -> list[BufferedFrame]:
        """Delay-critical RLC drop: discard frames older than the PDB.

        A frame aged exactly pdb survives; the budget is exceeded only
        strictly after it.
        """
        dropped = []
        kept = deque()
        for fr in self.buffer:
            if now - fr.arrived > self.qos.pdb:
                dropped.append(fr)
                self.buffered_bytes -= fr.remaining
            else:
                kept.append(fr)
        self.buffer = kept
        return dropped


def rlc_pdb_drop(ues, now: int, discipline: Discipline):
    """Apply the delay-critical drop rule across UEs.

    Scoped to DC-GBR profiles under the PDB discipline; other traffic keeps
    aging in the buffer.
    """
    dropped: list[tuple[UeUplinkState, BufferedFrame]] = []
    if discipline is not Discipline.PDB_PRIORITY:
        return dropped
    for ue in ues:
        if ue.qos.resource_type is ResourceType.DC_GBR:
            for fr in ue.drop_expired(now):
                dropped.append((ue, fr))
    return dropped


class GnbScheduler:
    """Network-side grant bookkeeping for dynamically scheduled UEs.

    reserved_of(abs_slot) must yield the RB indices the grant-free plan
    owns in that slot, so dynamic grants stay disjoint from reservations.
    """

    def __init__(self, pattern: TddPattern, discipline: Discipline,
                 mcs_range: McsRange, reserved_of=None,
                 initial_rbs: int = DEFAULT_INITIAL_RBS,
                 pf_alpha: float = DEFAULT_PF_ALPHA,
                 n_re_per_rb: int = linkadapt.DEFAULT_N_RE_PER_RB):
        self.pattern = pattern
        self.discipline = discipline
        self.mcs_range = mcs_range
        self.reserved_of = reserved_of or (lambda abs_slot: ())
        self.initial_rbs = initial_rbs
        self.pf_alpha = pf_alpha
        self.n_re_per_rb = n_re_per_rb
        self.backlog: dict[int, int] = {}
        self.pending_srs: list[int] = []
        self.deferred_initial_grants = 0
        self.ewma_rate: dict[int, float] = {}

    def on_sr(self, ue_id: int) -> None:
        if ue_id not in self.pending_srs:
            self.pending_srs.append(ue_id)

    def on_bsr(self, ue_id: int, backlog: int) -> None:
        # Reports overwrite; they never accumulate.
        if backlog > 0:
            self.backlog[ue_id] = backlog
        else:
            self.backlog.pop(ue_id, None)

    def plan_cycle(self, frame: int, ues: dict[int, UeUplinkState], channel,
                   now: int) -> dict[int, list[tuple[int, Grant]]]:
        """Grants per absolute slot for the TDD cycle starting at `frame`.

        Initial grants (one per pending SR) land in the earliest UL-capable
        slot with room; remaining RBs are handed out per the discipline
        until each reported backlog is covered.
        """
        ul_slots = [frame * self.pattern.n_slots + s for s in self.pattern.ul_capable_slots()]
        taken: dict[int, set[int]] = {s: set(self.reserved_of(s)) for s in ul_slots}
        plan: dict[int, list[tuple[int, Grant]]] = {s: [] for s in ul_slots}
        outstanding = dict(self.backlog)

        srs, self.pending_srs = self.pending_srs, []
        for ue_id in srs:
            granted = False
            for abs_slot in ul_slots:
                grant = self._initial_grant(abs_slot, taken[abs_slot], ues[ue_id], channel)
                if grant is not None:
                    taken[abs_slot].update(grant.rbs)
                    plan[abs_slot].append((ue_id, grant))
                    served = linkadapt.tbs(grant.mcs, len(grant.rbs), self.n_re_per_rb)
                    if ue_id in outstanding:
                        outstanding[ue_id] = max(0, outstanding[ue_id] - served)
                    granted = True
                    break
            if not granted:
                # No room anywhere this cycle: retry next cycle.
                self.pending_srs.append(ue_id)
                self.deferred_initial_grants += 1

        for abs_slot in ul_slots:
            self._fill_residual(abs_slot, taken[abs_slot], outstanding, ues,
                                channel, plan[abs_slot], now)
        return plan

    def _initial_grant(self, abs_slot: int, taken: set[int],
                       ue: UeUplinkState, channel) -> Grant | None:
        free = self._free_rbs(abs_slot, taken)
        if not free:
            return None
        mcs, _ = linkadapt.effective_mcs(channel.cqi_of(ue.ue_id, free), self.mcs_range)
        if ue.qos.mdbv is not None:
            need = linkadapt.min_rbs_for(ue.qos.mdbv, mcs, len(free), self.n_re_per_rb)
            n = len(free) if need is None else max(1, need)
        else:
            n = min(self.initial_rbs, len(free))
        ref = SlotRef(abs_slot // self.pattern.n_slots, abs_slot % self.pattern.n_slots)
        return Grant(slot=ref, rbs=tuple(free[:n]), mcs=mcs, kind="initial")

    def _fill_residual(self, abs_slot: int, taken: set[int],
                       outstanding: dict[int, int], ues, channel,
                       out: list, now: int) -> None:
        free = self._free_rbs(abs_slot, taken)
        backlogged = [u for u, b in outstanding.items() if b > 0]
        served_bytes = {u: 0 for u in backlogged}
        if free and backlogged:
            order = self._rank(backlogged, free, ues, channel, now)
            for ue_id in order:
                if not free:
                    break
                mcs, _ = linkadapt.effective_mcs(
                    channel.cqi_of(ue_id, free), self.mcs_range)
                need = linkadapt.min_rbs_for(outstanding[ue_id], mcs, len(free),
                                             self.n_re_per_rb)
                n = len(free) if need is None else need
                if n == 0:
                    continue
                rbs = tuple(free[:n])
                free = free[n:]
                ref = SlotRef(abs_slot // self.pattern.n_slots,
                              abs_slot % self.pattern.n_slots)
                out.append((ue_id, Grant(slot=ref, rbs=rbs, mcs=mcs, kind="bsr")))
                served = linkadapt.tbs(mcs, len(rbs), self.n_re_per_rb)
                served_bytes[ue_id] = served
                outstanding[ue_id] = max(0, outstanding[ue_id] - served)
        if self.discipline is Discipline.PROPORTIONAL_FAIR:
            a = self.pf_alpha
            for ue_id in backlogged:
                prev = self.ewma_rate.get(ue_id, 0.0)
                self.ewma_rate[ue_id] = (1 - a) * prev + a * served_bytes.get(ue_id, 0)

    def _rank(self, backlogged, free, ues, channel, now: int) -> list[int]:
        def one_rb_rate(ue_id: int) -> int:
            mcs, _ = linkadapt.effective_mcs(channel.cqi_of(ue_id, free), self.mcs_range)
            return linkadapt.tbs(mcs, 1, self.n_re_per_rb)

        d = self.discipline
        if d is Discipline.STRICT_PRIORITY:
            key = lambda u: (ues[u].qos.priority, u)
        elif d is Discipline.MAX_CI:
            key = lambda u: (-one_rb_rate(u), u)
        elif d is Discipline.PROPORTIONAL_FAIR:
            def key(u):
                ewma = self.ewma_rate.get(u, 0.0)
                rate = one_rb_rate(u)
                metric = rate / ewma if ewma > 0 else float("inf")
                return (-metric, u)
        else:  # PDB_PRIORITY: least remaining delay budget first
            def key(u):
                ue = ues[u]
                if ue.buffer:
                    waited = now - ue.buffer[0].arrived
                else:
                    waited = 0
                return (ue.qos.pdb - waited, ue.qos.priority, u)
        return sorted(backlogged, key=key)

    def _free_rbs(self, abs_slot: int, taken: set[int]) -> list[int]:
        cap = self.pattern.capacity(abs_slot % self.pattern.n_slots)
        return [rb for rb in range(cap) if rb not in taken]
