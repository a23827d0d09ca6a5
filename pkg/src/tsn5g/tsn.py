"""Wired TSN switch mechanics: time-aware gates, per-stream filtering,
and two-rate three-color policing.

Gate state is a pure function of time (entry list over a cycle); meters
hold token state in byte-nanosecond units so refills are exact integers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

ALL_CLASSES = 0xFF
_SCALE = 1_000_000_000  # token bookkeeping in bytes * ns/s


class GclError(ValueError):
    pass


@dataclass(frozen=True)
class GateControlList:
    """Cyclic egress gate schedule: (duration, open-class bitmask) entries."""

    cycle: int
    entries: tuple[tuple[int, int], ...]
    base_time: int = 0

    def __post_init__(self):
        if self.cycle <= 0:
            raise GclError("cycle must be positive")
        if sum(d for d, _ in self.entries) != self.cycle:
            raise GclError("entry durations must sum to the cycle")
        for d, mask in self.entries:
            if d <= 0:
                raise GclError("entry durations must be positive")
            if not 0 <= mask <= ALL_CLASSES:
                raise GclError("class mask must fit 8 traffic classes")

    @staticmethod
    def always_open(cycle: int = 1_000_000) -> "GateControlList":
        return GateControlList(cycle=cycle, entries=((cycle, ALL_CLASSES),))


def gate_open_classes(gcl: GateControlList, t: int) -> int:
    """Bitmask of classes whose gate is open at time t."""
    pos = (t - gcl.base_time) % gcl.cycle
    acc = 0
    for duration, mask in gcl.entries:
        acc += duration
        if pos < acc:
            return mask
    raise AssertionError("entry walk fell off the cycle")


def gate_is_open(gcl: GateControlList, cls: int, t: int) -> bool:
    return bool(gate_open_classes(gcl, t) >> cls & 1)


def time_until_gate_close(gcl: GateControlList, cls: int, t: int) -> int | None:
    """ns until class cls's gate closes, or None when it never does.

    Walks consecutive entries (wrapping) while the class stays open; a full
    lap means the gate is permanently open.
    """
    pos = (t - gcl.base_time) % gcl.cycle
    acc = 0
    idx = 0
    for i, (duration, _) in enumerate(gcl.entries):
        acc += duration
        if pos < acc:
            idx = i
            break
    open_for = acc - pos
    if not gcl.entries[idx][1] >> cls & 1:
        return 0
    total = open_for
    i = (idx + 1) % len(gcl.entries)
    while i != idx and total < gcl.cycle:
        duration, mask = gcl.entries[i]
        if not mask >> cls & 1:
            return total
        total += duration
        i = (i + 1) % len(gcl.entries)
    if total >= gcl.cycle:
        return None
    return total


def next_gate_transition(gcl: GateControlList, t: int) -> int:
    """Earliest entry boundary strictly after t."""
    pos = (t - gcl.base_time) % gcl.cycle
    acc = 0
    for duration, _ in gcl.entries:
        acc += duration
        if pos < acc:
            return t + (acc - pos)
    raise AssertionError("entry walk fell off the cycle")


def transmission_time(size_bytes: int, rate_bps: int) -> int:
    """Wire time of a frame in ns, rounded up."""
    return -(-size_bytes * 8 * _SCALE // (rate_bps * 1))


def egress_pick(head_sizes: dict[int, int], gcl: GateControlList, t: int,
                rate_bps: int) -> int | None:
    """Choose the class to transmit at time t under gated strict priority.

    head_sizes maps class -> head-of-line frame size. A class is eligible
    when its gate is open and the frame finishes before the gate closes
    (no frame may straddle a closing gate). Highest class wins.
    """
    open_mask = gate_open_classes(gcl, t)
    best = None
    for cls in sorted(head_sizes, reverse=True):
        if not open_mask >> cls & 1:
            continue
        remaining = time_until_gate_close(gcl, cls, t)
        if remaining is not None and transmission_time(head_sizes[cls], rate_bps) > remaining:
            continue
        best = cls
        break
    return best


@dataclass
class TwoRateMeterState:
    """Two-rate three-color marker (color-blind).

    cir/eir in bytes per second; cbs/ebs in bytes. Tokens are tracked in
    bytes scaled by 1e9 so that refill over integer nanoseconds is exact.
    Both buckets start full.
    """

    cir: int
    cbs: int
    eir: int = 0
    ebs: int = 0
    tokens_green: int = field(default=-1)
    tokens_yellow: int = field(default=-1)
    last_update: int = 0

    def __post_init__(self):
        if min(self.cir, self.cbs, self.eir, self.ebs) < 0:
            raise ValueError("meter parameters must be >= 0")
        if self.tokens_green < 0:
            self.tokens_green = self.cbs * _SCALE
        if self.tokens_yellow < 0:
            self.tokens_yellow = self.ebs * _SCALE

    def color(self, frame_bytes: int, now: int) -> str:
        """Refill, then classify and charge the frame: green, yellow or red."""
        elapsed = now - self.last_update
        if elapsed > 0:
            self.tokens_green = min(self.cbs * _SCALE, self.tokens_green + self.cir * elapsed)
            self.tokens_yellow = min(self.ebs * _SCALE, self.tokens_yellow + self.eir * elapsed)
            self.last_update = now
        cost = frame_bytes * _SCALE
        if self.tokens_green >= cost:
            self.tokens_green -= cost
            return "green"
        if self.tokens_yellow >= cost:
            self.tokens_yellow -= cost
            return "yellow"
        return "red"

    @property
    def green_bytes(self) -> int:
        return self.tokens_green // _SCALE

    @property
    def yellow_bytes(self) -> int:
        return self.tokens_yellow // _SCALE


@dataclass
class StreamFilter:
    """Per-stream ingress filter: time gate, optional priority override,
    optional rate meter."""

    stream_id: str
    gate_gcl: GateControlList | None = None
    ipv: int | None = None
    meter: TwoRateMeterState | None = None

    def __post_init__(self):
        if self.ipv is not None and not 0 <= self.ipv <= 7:
            raise ValueError("ipv must be in [0, 7]")


@dataclass(frozen=True)
class FilterDecision:
    passed: bool
    effective_class: int | None = None
    drop_reason: str | None = None


def psfp_filter(flt: StreamFilter, frame_bytes: int, frame_class: int, t: int) -> FilterDecision:
    """Gate check at the arrival instant, then the meter, then the IPV."""
    if flt.gate_gcl is not None and not gate_is_open(flt.gate_gcl, frame_class, t):
        return FilterDecision(False, drop_reason="gate")
    if flt.meter is not None and flt.meter.color(frame_bytes, t) == "red":
        return FilterDecision(False, drop_reason="meter")
    cls = flt.ipv if flt.ipv is not None else frame_class
    return FilterDecision(True, effective_class=cls)


def _class_intervals(gcl: GateControlList) -> dict[int, list[tuple[int, int]]]:
    """Open [start, end) intervals per class over one cycle."""
    out: dict[int, list[tuple[int, int]]] = {c: [] for c in range(8)}
    pos = 0
    for duration, mask in gcl.entries:
        for c in range(8):
            if mask >> c & 1:
                ivs = out[c]
                if ivs and ivs[-1][1] == pos:
                    ivs[-1] = (ivs[-1][0], pos + duration)
                else:
                    ivs.append((pos, pos + duration))
        pos += duration
    return out


def _shift_intervals(ivs, shift: int, cycle: int):
    shifted = []
    for a, b in ivs:
        a = (a + shift) % cycle
        b = a + (b - a)
        if b <= cycle:
            shifted.append((a, b))
        else:
            shifted.append((a, cycle))
            shifted.append((0, b - cycle))
    return sorted(shifted)


def _overlap(ivs_a, ivs_b) -> bool:
    for a0, a1 in ivs_a:
        for b0, b1 in ivs_b:
            if a0 < b1 and b0 < a1:
                return True
    return False


def shift_gcl(gcl: GateControlList, shifts: dict[int, int]) -> GateControlList:
    """Move each class's open intervals forward by its shift, modulo the
    cycle.

    Classes whose open intervals were mutually disjoint (dedicated slots)
    must remain disjoint afterwards; a collision raises GclError naming the
    classes. Unlisted classes shift by zero.
    """
    for cls, s in shifts.items():
        if not 0 <= cls <= 7:
            raise GclError(f"class {cls} outside [0, 7]")
        if not 0 <= s <= gcl.cycle:
            raise GclError(f"shift for class {cls} must be within one cycle")
    before = _class_intervals(gcl)
    after = {
        c: _shift_intervals(ivs, shifts.get(c, 0) % gcl.cycle, gcl.cycle)
        for c, ivs in before.items()
    }
    classes = [c for c in range(8) if before[c]]
    for i, c in enumerate(classes):
        for d in classes[i + 1:]:
            if not _overlap(before[c], before[d]) and _overlap(after[c], after[d]):
                raise GclError(f"shifted intervals of classes {c} and {d} collide")
    points = sorted({0, gcl.cycle} | {p for ivs in after.values() for ab in ivs for p in ab})
    entries = []
    for a, b in zip(points, points[1:]):
        mask = 0
        for c in range(8):
            if any(s <= a and b <= e for s, e in after[c]):
                mask |= 1 << c
        entries.append((b - a, mask))
    merged: list[tuple[int, int]] = []
    for d, m in entries:
        if merged and merged[-1][1] == m:
            merged[-1] = (merged[-1][0] + d, m)
        else:
            merged.append((d, m))
    return GateControlList(cycle=gcl.cycle, entries=tuple(merged), base_time=gcl.base_time)
