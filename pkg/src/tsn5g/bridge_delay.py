"""Uplink bridge-delay bounds per allocation mode and traffic class.

The 5G segment advertises, per traffic class, the min/max forwarding delay
it can guarantee. Grant-free (pre-allocated) traffic gets tight static
bounds; grant-based traffic gets bounds covering the SR/BSR signaling
round trips. Classes 5 and 6 are pre-allocated, class 4 is dynamic with
the burst size known in advance (MDBV), everything else is plain dynamic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .timebase import SlotType, TddPattern


class AllocationMode(enum.Enum):
    GRANT_FREE_SINGLE_SLOT = "grant_free_single_slot"
    GRANT_FREE = "grant_free"
    DYNAMIC_BS_KNOWN = "dynamic_bs_known"
    DYNAMIC = "dynamic"


# Traffic class -> allocation mode (classes 0-3 and 7 are plain dynamic).
MODE_FOR_TC: dict[int, AllocationMode] = {
    0: AllocationMode.DYNAMIC,
    1: AllocationMode.DYNAMIC,
    2: AllocationMode.DYNAMIC,
    3: AllocationMode.DYNAMIC,
    4: AllocationMode.DYNAMIC_BS_KNOWN,
    5: AllocationMode.GRANT_FREE,
    6: AllocationMode.GRANT_FREE_SINGLE_SLOT,
    7: AllocationMode.DYNAMIC,
}


@dataclass(frozen=True)
class DelayParams:
    """delta is the forwarding delay between the TSN translator and the UE."""

    delta: int = 0

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")


@dataclass(frozen=True)
class BridgeDelayBounds:
    min: int
    max: int
    frame_size_dependent: int = 0
    frame_size_independent: int | None = None

    def __post_init__(self):
        if self.min > self.max:
            raise ValueError(f"bridge delay min {self.min} > max {self.max}")


def _bounds(min_ns: int, max_ns: int, delta: int) -> BridgeDelayBounds:
    # The slot-calendar bounds do not depend on frame size (size effects are
    # absorbed into RB counts), but the capability report schema wants the
    # dependent/independent split populated.
    return BridgeDelayBounds(
        min=min_ns,
        max=max_ns,
        frame_size_dependent=0,
        frame_size_independent=max_ns - delta,
    )


def _require_ul(pattern: TddPattern) -> None:
    if pattern.s_ul < 1:
        raise ValueError("pattern has no UL slot")


def max_dynamic_bd(pattern: TddPattern, p: DelayParams, bs_known: bool = False) -> int:
    """Worst-case grant-based delay: buffer one slot, one cycle for the SR,
    then one cycle less when the grant can be sized up front."""
    _require_ul(pattern)
    cycles = 2 if bs_known else 3
    return p.delta + cycles * pattern.t_tdd + pattern.t_slot


def min_dynamic_bd(pattern: TddPattern, p: DelayParams, bs_known: bool = False) -> int:
    """Best-case grant-based delay: SR in the last UL slot, resources in the
    next cycle's first UL-capable slot."""
    _require_ul(pattern)
    base = p.delta + pattern.t_slot * (pattern.s_dl + 2)
    return base if bs_known else base + pattern.t_tdd


def static_bd_bounds(pattern: TddPattern, p: DelayParams, single_slot: bool = False) -> BridgeDelayBounds:
    """Grant-free bounds; single_slot collapses them to the jitter-free floor."""
    _require_ul(pattern)
    lo = p.delta + pattern.t_slot
    if single_slot:
        return _bounds(lo, lo, p.delta)
    return _bounds(lo, p.delta + pattern.t_tdd + pattern.t_slot, p.delta)


def dynamic_bd_bounds(pattern: TddPattern, p: DelayParams, bs_known: bool = False) -> BridgeDelayBounds:
    return _bounds(
        min_dynamic_bd(pattern, p, bs_known),
        max_dynamic_bd(pattern, p, bs_known),
        p.delta,
    )


@dataclass(frozen=True)
class JitterFreeCheck:
    ok: bool
    # Violated precondition names: "arrival_phase" when the burst arrival
    # time does not line up with the pinned slot, "period" when the flow
    # period is not a whole number of TDD cycles.
    violated: tuple[str, ...] = ()


def check_jitter_free(bat: int, period: int, pattern: TddPattern,
                      p: DelayParams, x: int) -> JitterFreeCheck:
    """Check the single-slot preconditions for pinning a flow to slot x.

    The arrival-phase condition compares modulo the cycle so that a delta
    larger than x slots stays well-defined.
    """
    if not 0 <= x < pattern.n_slots:
        raise ValueError(f"slot index {x} outside pattern")
    if pattern.labels[x] is SlotType.DL:
        raise ValueError(f"slot {x} is DL; single-slot transmissions need UL or SPECIAL")
    violated = []
    if bat % pattern.t_tdd != (x * pattern.t_slot - p.delta) % pattern.t_tdd:
        violated.append("arrival_phase")
    if period % pattern.t_tdd != 0:
        violated.append("period")
    return JitterFreeCheck(ok=not violated, violated=tuple(violated))


def jitter_free_slot(bat: int, period: int, pattern: TddPattern, p: DelayParams) -> int | None:
    """The unique slot index satisfying the single-slot preconditions for
    this flow, or None when no UL-capable slot lines up."""
    if period % pattern.t_tdd != 0:
        return None
    phase = (bat + p.delta) % pattern.t_tdd
    if phase % pattern.t_slot != 0:
        return None
    x = phase // pattern.t_slot
    if pattern.labels[x] is SlotType.DL:
        return None
    return x


@dataclass(frozen=True)
class TcBridgeDelay:
    mode: AllocationMode
    bounds: BridgeDelayBounds
    # True when a class-6 flow missed the single-slot preconditions and the
    # wider grant-free bounds were reported instead.
    increased_bd: bool = False


def bd_for_tc(tc: int, pattern: TddPattern, p: DelayParams,
              flow=None) -> TcBridgeDelay:
    """Allocation mode and bridge-delay bounds for a traffic class.

    Classes 5 and 6 need the flow (its arrival time and period decide the
    single-slot check); flow objects only need .bat and .period attributes.
    """
    if tc not in MODE_FOR_TC:
        raise ValueError(f"traffic class {tc} outside [0, 7]")
    mode = MODE_FOR_TC[tc]
    if mode is AllocationMode.GRANT_FREE_SINGLE_SLOT:
        if flow is None:
            raise ValueError("TC 6 needs the flow to evaluate the single-slot preconditions")
        x = jitter_free_slot(flow.bat, flow.period, pattern, p)
        if x is None:
            return TcBridgeDelay(
                mode=AllocationMode.GRANT_FREE,
                bounds=static_bd_bounds(pattern, p, single_slot=False),
                increased_bd=True,
            )
        return TcBridgeDelay(mode, static_bd_bounds(pattern, p, single_slot=True))
    if mode is AllocationMode.GRANT_FREE:
        if flow is None:
            raise ValueError("TC 5 needs the flow")
        return TcBridgeDelay(mode, static_bd_bounds(pattern, p, single_slot=False))
    bs_known = mode is AllocationMode.DYNAMIC_BS_KNOWN
    return TcBridgeDelay(mode, dynamic_bd_bounds(pattern, p, bs_known))
