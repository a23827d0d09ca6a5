"""Link adaptation: CQI to MCS mapping, transport block sizes, and the
synthetic per-(UE, RB) channel process.

The CQI and MCS tables are pinned so that schedules and tests are
reproducible. TBS follows the TS 38.214 5.1.3.2 determination procedure
with a configurable resource-element count per RB (default 144, i.e. a
fixed DMRS/overhead assumption).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

CQI_MIN, CQI_MAX = 1, 15
MCS_MIN, MCS_MAX = 0, 28

# TS 38.214 Table 5.1.3.1-1 (PUSCH/PDSCH, 64QAM): index -> (Qm, R*1024).
MCS_QM_R1024: tuple[tuple[int, int], ...] = (
    (2, 120), (2, 157), (2, 193), (2, 251), (2, 308),
    (2, 379), (2, 449), (2, 526), (2, 602), (2, 679),
    (4, 340), (4, 378), (4, 434), (4, 490), (4, 553),
    (4, 616), (4, 658), (6, 438), (6, 466), (6, 517),
    (6, 567), (6, 616), (6, 666), (6, 719), (6, 772),
    (6, 822), (6, 873), (6, 910), (6, 948),
)

# CQI index (TS 38.214 Table 5.2.2.1-2) -> highest Table 5.1.3.1-1 MCS whose
# spectral efficiency does not exceed the CQI's, floored at MCS 0.
CQI_TO_MCS: tuple[int, ...] = (0, 0, 2, 4, 6, 8, 11, 13, 15, 18, 20, 22, 24, 26, 28)

# TS 38.214 Table 5.1.3.2-1: TBS values (bits) for quantized N_info <= 3824.
TBS_TABLE: tuple[int, ...] = (
    24, 32, 40, 48, 56, 64, 72, 80, 88, 96, 104, 112, 120, 128, 136, 144,
    152, 160, 168, 176, 184, 192, 208, 224, 240, 256, 272, 288, 304, 320,
    336, 352, 368, 384, 408, 432, 456, 480, 504, 528, 552, 576, 608, 640,
    672, 704, 736, 768, 808, 848, 888, 928, 984, 1032, 1064, 1128, 1160,
    1192, 1224, 1256, 1288, 1320, 1352, 1416, 1480, 1544, 1608, 1672,
    1736, 1800, 1864, 1928, 2024, 2088, 2152, 2216, 2280, 2408, 2472,
    2536, 2600, 2664, 2728, 2792, 2856, 2976, 3104, 3240, 3368, 3496,
    3624, 3752, 3824,
)

DEFAULT_N_RE_PER_RB = 144


def check_cqi(value: int) -> int:
    if not CQI_MIN <= value <= CQI_MAX:
        raise ValueError(f"CQI {value} outside [{CQI_MIN}, {CQI_MAX}]")
    return value


def check_mcs(value: int) -> int:
    if not MCS_MIN <= value <= MCS_MAX:
        raise ValueError(f"MCS {value} outside [{MCS_MIN}, {MCS_MAX}]")
    return value


@dataclass(frozen=True)
class McsRange:
    """Inclusive MCS bounds a scheduler may assign."""

    min: int = MCS_MIN
    max: int = MCS_MAX

    def __post_init__(self):
        check_mcs(self.min)
        check_mcs(self.max)
        if self.min > self.max:
            raise ValueError(f"MCS range [{self.min}, {self.max}] is empty")


def cqi_to_mcs(cqi: int, mcs_range: McsRange, clamp_low: bool = True) -> int | None:
    """Map a CQI to an MCS and clamp it into mcs_range.

    When the table value falls below mcs_range.min and clamp_low is False,
    returns None (infeasible) instead of forcing the higher MCS.
    """
    check_cqi(cqi)
    value = CQI_TO_MCS[cqi - 1]
    if value < mcs_range.min:
        if not clamp_low:
            return None
        return mcs_range.min
    return min(value, mcs_range.max)


def effective_mcs(
    cqi_per_rb, mcs_range: McsRange
) -> tuple[int, list[int]]:
    """Effective MCS and eligible RB positions for a candidate RB set.

    The mean CQI is exact (Fraction); eligible positions are those whose
    CQI is >= the mean. The MCS is the table value of floor(mean), clamped
    into mcs_range.
    """
    values = list(cqi_per_rb)
    if not values:
        raise ValueError("effective_mcs needs at least one RB")
    mean = Fraction(sum(values), len(values))
    eligible = [i for i, v in enumerate(values) if v >= mean]
    mcs = cqi_to_mcs(int(math.floor(mean)), mcs_range)
    return mcs, eligible


def tbs(mcs: int, n_rb: int, n_re_per_rb: int = DEFAULT_N_RE_PER_RB) -> int:
    """Transport block size in bytes for one layer (TS 38.214 5.1.3.2).

    Zero RBs carry zero bytes. The intermediate-information quantization of
    the standard makes the result non-decreasing (not always strictly
    increasing) in n_rb.
    """
    if n_rb < 0:
        raise ValueError("n_rb must be >= 0")
    if n_rb == 0:
        return 0
    check_mcs(mcs)
    qm, r1024 = MCS_QM_R1024[mcs]
    n_re = min(156, n_re_per_rb) * n_rb
    # N_info in bits, kept exact: n_re * Qm * R with R = r1024/1024.
    n_info = Fraction(n_re * qm * r1024, 1024)
    if n_info <= 3824:
        n = max(3, _floor_log2(n_info) - 6)
        n_info_q = max(24, (1 << n) * (int(n_info) >> n))
        for t in TBS_TABLE:
            if t >= n_info_q:
                return t // 8
        raise AssertionError("quantized N_info exceeds the 3824 table")
    n = _floor_log2(n_info - 24) - 5
    n_info_q = max(3840, (1 << n) * _round_half_even(Fraction(n_info - 24, 1 << n)))
    if Fraction(r1024, 1024) <= Fraction(1, 4):
        c = -((n_info_q + 24) // -3816)
    elif n_info_q > 8424:
        c = -((n_info_q + 24) // -8424)
    else:
        c = 1
    bits = 8 * c * -((n_info_q + 24) // -(8 * c)) - 24
    return bits // 8


def _floor_log2(x: Fraction) -> int:
    return int(x).bit_length() - 1


def _round_half_even(x: Fraction) -> int:
    # round() on Fraction implements banker's rounding exactly.
    return round(x)


def min_rbs_for(bytes_needed: int, mcs: int, max_rbs: int,
                n_re_per_rb: int = DEFAULT_N_RE_PER_RB) -> int | None:
    """Smallest RB count whose TBS covers bytes_needed, or None if even
    max_rbs falls short."""
    if bytes_needed <= 0:
        return 0
    lo, hi = 1, max_rbs
    if tbs(mcs, hi, n_re_per_rb) < bytes_needed:
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if tbs(mcs, mid, n_re_per_rb) >= bytes_needed:
            hi = mid
        else:
            lo = mid + 1
    return lo


def transmit_outcome(granted_mcs: int, current_effective_mcs: int) -> bool:
    """True (delivered) iff the grant's MCS is supportable right now.

    Deterministic threshold model: a grant encoded above what the channel
    currently sustains is lost outright; there are no retransmissions.
    """
    return granted_mcs <= current_effective_mcs


class ChannelState:
    """Per-(UE, RB) CQI grid evolved by a seeded bounded random walk.

    Each step moves every CQI by +/-1 with probability step_sigma (direction
    uniform), clamped to [1, 15]. Evolution is a pure function of the seed,
    so runs replay bit-identically.
    """

    def __init__(self, n_ue: int, n_rb: int, seed: int,
                 init_cqi: int = 9, step_sigma: float = 0.0,
                 update_period: int = 1_000_000):
        check_cqi(init_cqi)
        if not 0.0 <= step_sigma <= 1.0:
            raise ValueError("step_sigma must be in [0, 1]")
        if update_period <= 0:
            raise ValueError("update_period must be positive")
        self.n_ue = n_ue
        self.n_rb = n_rb
        self.seed = seed
        self.step_sigma = step_sigma
        self.update_period = update_period
        self.cqi = np.full((n_ue, n_rb), init_cqi, dtype=np.int64)
        self._rng = np.random.Generator(np.random.PCG64(seed))

    def step(self) -> None:
        if self.step_sigma == 0.0 or self.n_ue == 0:
            return
        move = self._rng.random(self.cqi.shape) < self.step_sigma
        direction = self._rng.integers(0, 2, size=self.cqi.shape) * 2 - 1
        self.cqi += np.where(move, direction, 0)
        np.clip(self.cqi, CQI_MIN, CQI_MAX, out=self.cqi)

    def cqi_of(self, ue: int, rbs) -> list[int]:
        row = self.cqi[ue]
        return [int(row[rb]) for rb in rbs]

    def pin(self, value: int) -> None:
        """Freeze every CQI at a fixed value (worst-case admission runs)."""
        check_cqi(value)
        self.cqi[:] = value

    def snapshot(self) -> np.ndarray:
        return self.cqi.copy()
