"""Transcribed benchmark tables: leaf judge scores and the printed aggregate cells.

Leaf order: task fulfillment, grounding, tool appropriateness, param accuracy,
dependency awareness, parallel efficiency.
"""

from __future__ import annotations

from fractions import Fraction

CONFIGS = ("react", "rpe-gpt-oss", "rpe-claude", "rpe-awm", "spiral-gpt-oss", "spiral-claude", "spiral-awm")

# gpt-oss planner, original metric set: leaves and printed (tc, ts, pe, overall)
GPT_OSS_ORIGINAL = {
    "react": ((46.8, 36.6, 41.5, 31.3, 40.5, 19.8), (41.7, 36.4, 30.1, 36.1)),
    "rpe-gpt-oss": ((38.5, 38.7, 42.5, 47.8, 36.9, 20.6), (38.6, 45.2, 28.8, 37.5)),
    "rpe-claude": ((31.4, 47.2, 53.1, 65.9, 27.1, 29.9), (39.3, 59.5, 28.5, 42.4)),
    "rpe-awm": ((33.7, 42.6, 45.2, 40.4, 29.6, 26.8), (38.2, 42.8, 28.2, 36.4)),
    "spiral-gpt-oss": ((32.8, 51.0, 59.6, 61.0, 33.6, 30.9), (41.9, 60.3, 32.3, 44.8)),
    "spiral-claude": ((34.5, 47.5, 55.3, 58.4, 33.3, 27.5), (41.0, 56.9, 30.4, 42.8)),
    "spiral-awm": ((31.6, 26.6, 33.6, 48.4, 20.5, 20.2), (29.1, 41.0, 20.3, 30.1)),
}

# gpt-oss planner with Execution Quality: leaves, success, avg calls, and printed
# (normalized calls, tc, ts, pe, eq, overall)
GPT_OSS_EQ = {
    "react": ((46.8, 36.6, 41.5, 31.2, 40.5, 19.8), 77.7, 7.04, (0.0, 41.7, 36.4, 30.1, 38.9, 36.8)),
    "spiral-gpt-oss": ((32.8, 51.0, 59.6, 61.0, 33.6, 30.9), 100.0, 2.42, (82.8, 41.9, 60.3, 32.2, 91.4, 56.5)),
    "spiral-claude": ((34.5, 47.5, 55.3, 58.4, 33.3, 27.5), 100.0, 2.58, (79.9, 41.0, 56.9, 30.4, 89.9, 54.6)),
    "rpe-claude": ((31.4, 47.2, 53.1, 65.9, 27.1, 29.9), 100.0, 2.67, (78.4, 39.3, 59.5, 28.5, 89.2, 54.1)),
    "rpe-awm": ((33.7, 42.6, 45.2, 40.4, 29.6, 26.8), 100.0, 2.25, (85.8, 38.2, 42.8, 28.2, 92.9, 50.5)),
    "rpe-gpt-oss": ((38.5, 38.7, 42.5, 47.8, 36.9, 20.6), 100.0, 2.83, (75.4, 38.6, 45.2, 28.8, 87.7, 50.0)),
    "spiral-awm": ((31.6, 26.6, 33.6, 48.4, 20.5, 20.2), 100.0, 1.46, (100.0, 29.1, 41.0, 20.4, 100.0, 47.6)),
}

# claude planner: leaves, success, avg calls, printed
# (tc, ts, pe, overall_orig, normalized calls, eq, overall_new)
CLAUDE = {
    "react": ((66.6, 66.9, 64.0, 52.4, 59.2, 30.4), 83.7, 29.78, (66.7, 58.2, 44.8, 56.6, 0.0, 41.9, 52.9)),
    "rpe-gpt-oss": ((41.8, 58.4, 70.9, 59.8, 50.2, 31.9), 100.0, 7.12, (50.1, 65.3, 41.1, 52.1, 79.1, 89.5, 61.5)),
    "rpe-claude": ((48.2, 52.7, 65.1, 58.9, 50.3, 26.5), 100.0, 6.91, (50.4, 62.0, 38.4, 50.3, 79.8, 89.9, 60.2)),
    "rpe-awm": ((41.6, 56.0, 60.5, 62.4, 46.0, 29.3), 100.0, 7.91, (48.8, 61.5, 37.6, 49.3, 76.3, 88.2, 59.0)),
    "spiral-gpt-oss": ((46.1, 32.9, 38.2, 48.6, 41.5, 25.0), 100.0, 1.92, (39.5, 43.4, 33.2, 38.7, 97.2, 98.6, 53.7)),
    "spiral-claude": ((51.0, 32.9, 35.1, 48.4, 38.2, 22.9), 100.0, 1.83, (42.0, 41.7, 30.6, 38.1, 97.5, 98.8, 53.3)),
    "spiral-awm": ((47.1, 32.7, 29.7, 43.4, 41.4, 21.7), 100.0, 1.12, (39.9, 36.5, 31.5, 36.0, 100.0, 100.0, 52.0)),
}

# printed cells that disagree with their own leaves by more than one-decimal slack
KNOWN_INCONSISTENT = {
    ("claude", "rpe-gpt-oss", "overall_orig"): "printed 52.1; leaves give 52.167",
    ("gpt-oss-eq", "spiral-claude", "eq"): "printed 89.9; leaves give 89.964",
    ("gpt-oss-eq", "rpe-claude", "normalized"): "printed 78.4; leaves give 78.315",
}


# ── independent oracle: exact rational arithmetic, written out longhand ──


def q(x: float) -> Fraction:
    return Fraction(str(x))


def oracle_groups(leaves):
    tf, g, ta, pa, da, pe = map(q, leaves)
    return (tf + g) / 2, (ta + pa) / 2, (da + pe) / 2


def oracle_normalized(avg, lo, hi):
    avg, lo, hi = q(avg), q(lo), q(hi)
    return Fraction(100) if hi == lo else 100 * (hi - avg) / (hi - lo)


def oracle_eq(success, normalized):
    return (q(success) + Fraction(normalized)) / 2
