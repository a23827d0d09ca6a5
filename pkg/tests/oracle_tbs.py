"""Standalone transport-block-size oracle.

Straight-line transcription of the 3GPP TS 38.214 section 5.1.3.2 TBS
determination procedure, kept independent of the package implementation.
Run as a script to print the golden values frozen in test_linkadapt.py.
"""

import math

# TS 38.214 Table 5.1.3.1-1 (64QAM): index -> (Qm, R*1024)
MCS_QM_R1024 = {
    0: (2, 120), 1: (2, 157), 2: (2, 193), 3: (2, 251), 4: (2, 308),
    5: (2, 379), 6: (2, 449), 7: (2, 526), 8: (2, 602), 9: (2, 679),
    10: (4, 340), 11: (4, 378), 12: (4, 434), 13: (4, 490), 14: (4, 553),
    15: (4, 616), 16: (4, 658), 17: (6, 438), 18: (6, 466), 19: (6, 517),
    20: (6, 567), 21: (6, 616), 22: (6, 666), 23: (6, 719), 24: (6, 772),
    25: (6, 822), 26: (6, 873), 27: (6, 910), 28: (6, 948),
}

# TS 38.214 Table 5.1.3.2-1: TBS values for N_info <= 3824 bits.
TBS_TABLE = [
    24, 32, 40, 48, 56, 64, 72, 80, 88, 96, 104, 112, 120, 128, 136, 144,
    152, 160, 168, 176, 184, 192, 208, 224, 240, 256, 272, 288, 304, 320,
    336, 352, 368, 384, 408, 432, 456, 480, 504, 528, 552, 576, 608, 640,
    672, 704, 736, 768, 808, 848, 888, 928, 984, 1032, 1064, 1128, 1160,
    1192, 1224, 1256, 1288, 1320, 1352, 1416, 1480, 1544, 1608, 1672,
    1736, 1800, 1864, 1928, 2024, 2088, 2152, 2216, 2280, 2408, 2472,
    2536, 2600, 2664, 2728, 2792, 2856, 2976, 3104, 3240, 3368, 3496,
    3624, 3752, 3824,
]


def tbs_bits(mcs, n_rb, n_re_per_rb=144, layers=1):
    if n_rb == 0:
        return 0
    qm, r1024 = MCS_QM_R1024[mcs]
    n_re = min(156, n_re_per_rb) * n_rb
    n_info = n_re * (r1024 / 1024.0) * qm * layers
    if n_info <= 3824:
        n = max(3, math.floor(math.log2(n_info)) - 6)
        n_info_q = max(24, (1 << n) * math.floor(n_info / (1 << n)))
        for t in TBS_TABLE:
            if t >= n_info_q:
                return t
        raise AssertionError("unreachable")
    n = math.floor(math.log2(n_info - 24)) - 5
    n_info_q = max(3840, (1 << n) * round((n_info - 24) / (1 << n)))
    if r1024 / 1024.0 <= 0.25:
        c = math.ceil((n_info_q + 24) / 3816)
    elif n_info_q > 8424:
        c = math.ceil((n_info_q + 24) / 8424)
    else:
        c = 1
    return 8 * c * math.ceil((n_info_q + 24) / (8 * c)) - 24


if __name__ == "__main__":
    goldens = [
        (5, 4), (5, 1), (0, 1), (28, 1), (28, 2), (11, 10), (20, 10),
        (5, 10), (28, 106), (0, 106), (11, 1), (20, 1), (5, 38),
    ]
    for mcs, n in goldens:
        bits = tbs_bits(mcs, n)
        print(f"tbs(mcs={mcs}, n_rb={n}) = {bits} bits = {bits // 8} bytes")

    # Monotonicity scan over the spec's stated domain.
    flat = []
    for mcs in range(29):
        prev = 0
        for n in range(1, 107):
            cur = tbs_bits(mcs, n)
            if cur < prev:
                print(f"DECREASE mcs={mcs} n_rb={n}: {prev} -> {cur}")
            elif cur == prev:
                flat.append((mcs, n))
            prev = cur
    print(f"flat one-RB steps (equal TBS): {len(flat)}; first few: {flat[:8]}")
    bad_mcs = []
    for n in range(1, 107):
        prev = -1
        for mcs in range(29):
            cur = tbs_bits(mcs, n)
            if cur < prev:
                bad_mcs.append((mcs, n, prev, cur))
            prev = cur
    print(f"mcs-direction decreases: {bad_mcs[:8]}")
