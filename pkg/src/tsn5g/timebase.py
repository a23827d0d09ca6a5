"""Integer-nanosecond time base and TDD slot calendar.

All simulation time is integer nanoseconds. Slot durations for numerology
mu in [0, 3] are exact microsecond multiples (1000/2^mu us), so every slot
and cycle boundary is representable without rounding and modular checks on
arrival times are exact.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


def us(x: int) -> int:
    return x * NS_PER_US


def ms(x: int) -> int:
    return x * NS_PER_MS


def seconds(x: int) -> int:
    return x * NS_PER_S


class SlotType(enum.Enum):
    DL = "D"
    SPECIAL = "S"
    UL = "U"


@dataclass(frozen=True, order=True)
class SlotRef:
    """Slot position as (TDD-cycle index, slot index within the cycle)."""

    frame: int
    slot: int


@dataclass(frozen=True)
class TddPattern:
    """TDD slot calendar: label sequence, numerology, and RB capacity.

    Derived timing fields are exact integers. Special slots are usable for
    uplink with a reduced RB capacity given by ``special_ul_fraction``.
    """

    labels: tuple[SlotType, ...]
    mu: int
    n_rb: int
    special_ul_fraction: Fraction
    s_dl: int
    s_sp: int
    s_ul: int
    t_slot: int
    t_tdd: int

    @property
    def n_slots(self) -> int:
        return len(self.labels)

    @property
    def special_capacity(self) -> int:
        return int(self.special_ul_fraction * self.n_rb)

    def label_at(self, slot: int) -> SlotType:
        return self.labels[slot % self.n_slots]

    def is_ul_capable(self, slot: int) -> bool:
        return self.labels[slot % self.n_slots] in (SlotType.UL, SlotType.SPECIAL)

    def capacity(self, slot: int) -> int:
        """Schedulable uplink RBs of a slot (0 for DL slots)."""
        label = self.labels[slot % self.n_slots]
        if label is SlotType.UL:
            return self.n_rb
        if label is SlotType.SPECIAL:
            return self.special_capacity
        return 0

    def slot_start(self, ref: SlotRef) -> int:
        return ref.frame * self.t_tdd + ref.slot * self.t_slot

    def slot_end(self, ref: SlotRef) -> int:
        return self.slot_start(ref) + self.t_slot

    def abs_slot(self, ref: SlotRef) -> int:
        """Flat slot counter since t=0."""
        return ref.frame * self.n_slots + ref.slot

    def ref_of(self, abs_slot: int) -> SlotRef:
        return SlotRef(abs_slot // self.n_slots, abs_slot % self.n_slots)

    def ul_capable_slots(self) -> tuple[int, ...]:
        return tuple(i for i, lb in enumerate(self.labels) if lb is not SlotType.DL)


def pattern_from_string(
    labels: str,
    mu: int,
    n_rb: int,
    special_ul_fraction: Fraction | float | int | str = 1,
) -> TddPattern:
    """Build a TddPattern from a label string like ``"DDDDDDDSUU"``.

    Raises ValueError for characters outside {D, S, U}, mu outside [0, 3],
    or n_rb < 1.
    """
    if not labels:
        raise ValueError("pattern string must be nonempty")
    try:
        parsed = tuple(SlotType(ch) for ch in labels)
    except ValueError:
        bad = sorted(set(labels) - {"D", "S", "U"})
        raise ValueError(f"invalid pattern characters {bad!r}; expected D, S or U") from None
    if not 0 <= mu <= 3:
        raise ValueError(f"numerology mu={mu} outside [0, 3]")
    if n_rb < 1:
        raise ValueError("n_rb must be >= 1")
    frac = _as_fraction(special_ul_fraction)
    if not 0 <= frac <= 1:
        raise ValueError(f"special_ul_fraction {frac} outside [0, 1]")
    t_slot = NS_PER_MS >> mu
    return TddPattern(
        labels=parsed,
        mu=mu,
        n_rb=n_rb,
        special_ul_fraction=frac,
        s_dl=sum(1 for lb in parsed if lb is SlotType.DL),
        s_sp=sum(1 for lb in parsed if lb is SlotType.SPECIAL),
        s_ul=sum(1 for lb in parsed if lb is SlotType.UL),
        t_slot=t_slot,
        t_tdd=len(parsed) * t_slot,
    )


def _as_fraction(x) -> Fraction:
    # str(float) round-trips through decimal text, so 0.1 becomes 1/10.
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


def slot_at(pattern: TddPattern, t: int) -> tuple[SlotRef, SlotType]:
    """Slot containing time t (t >= 0), with its label."""
    frame, rem = divmod(t, pattern.t_tdd)
    slot = rem // pattern.t_slot
    return SlotRef(frame, slot), pattern.labels[slot]


def next_slot_boundary(pattern: TddPattern, t: int) -> int:
    """Earliest slot start >= t."""
    q, rem = divmod(t, pattern.t_slot)
    return (q + (1 if rem else 0)) * pattern.t_slot


def ul_opportunities_in(pattern: TddPattern, from_ns: int, horizon: int) -> list[SlotRef]:
    """UL and SPECIAL slots whose start time lies in [from_ns, from_ns + horizon).

    Chronological order. horizon must be positive.
    """
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    end = from_ns + horizon
    out: list[SlotRef] = []
    ref, _ = slot_at(pattern, max(from_ns, 0))
    abs_slot = pattern.abs_slot(ref)
    if pattern.slot_start(ref) < from_ns:
        abs_slot += 1
    while True:
        ref = pattern.ref_of(abs_slot)
        start = pattern.slot_start(ref)
        if start >= end:
            return out
        if pattern.is_ul_capable(ref.slot):
            out.append(ref)
        abs_slot += 1


def next_ul_opportunity(pattern: TddPattern, t: int) -> SlotRef:
    """First UL or SPECIAL slot whose start is >= t."""
    if pattern.s_ul + pattern.s_sp == 0:
        raise ValueError("pattern has no UL or SPECIAL slot")
    ref, _ = slot_at(pattern, max(t, 0))
    abs_slot = pattern.abs_slot(ref)
    if pattern.slot_start(ref) < t:
        abs_slot += 1
    while True:
        ref = pattern.ref_of(abs_slot)
        if pattern.is_ul_capable(ref.slot):
            return ref
        abs_slot += 1
