"""5G TDD uplink as a transparent TSN bridge: bridge-delay calculus,
grant-free and grant-based uplink scheduling, time-aware TSN mechanisms,
and a deterministic discrete-event simulator."""

from .bridge_delay import (
    AllocationMode,
    BridgeDelayBounds,
    DelayParams,
    bd_for_tc,
    check_jitter_free,
    jitter_free_slot,
    max_dynamic_bd,
    min_dynamic_bd,
    static_bd_bounds,
)
from .dynamic import Discipline, QosProfile, ResourceType
from .grantfree import (
    FlowSpec,
    GrantFreeSchedule,
    admission_check,
    hyperperiod,
    needs_reschedule,
    preallocate,
    reset_flow,
    window_slots,
)
from .linkadapt import ChannelState, McsRange, cqi_to_mcs, effective_mcs, tbs
from .scenario import Scenario, load_scenario, preset, run_scenario, save_scenario, validate
from .timebase import SlotRef, TddPattern, pattern_from_string, slot_at, ul_opportunities_in
from .tsn import GateControlList, StreamFilter, TwoRateMeterState, shift_gcl

__version__ = "0.1.0"

__all__ = [
    "AllocationMode", "BridgeDelayBounds", "ChannelState", "DelayParams",
    "Discipline", "FlowSpec", "GateControlList", "GrantFreeSchedule",
    "McsRange", "QosProfile", "ResourceType", "Scenario", "SlotRef",
    "StreamFilter", "TddPattern", "TwoRateMeterState", "admission_check",
    "bd_for_tc", "check_jitter_free", "cqi_to_mcs", "effective_mcs",
    "hyperperiod", "jitter_free_slot", "load_scenario", "max_dynamic_bd",
    "min_dynamic_bd", "needs_reschedule", "pattern_from_string",
    "preallocate", "preset", "reset_flow", "run_scenario", "save_scenario",
    "shift_gcl", "slot_at", "static_bd_bounds", "tbs", "ul_opportunities_in",
    "validate", "window_slots",
]
