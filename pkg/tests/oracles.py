"""Reference evaluators written directly from the formulas, in doubled integers.

Nothing here imports from ``page``.
"""
from __future__ import annotations

import itertools


def doubled_distance(o: int, t: int, same_speaker: bool) -> int:
    """2 * D(o, t)."""
    if same_speaker:
        return o - t
    if t == o + 1 or t == o - 1:
        return -2
    return o - t - 1


def doubled_relation(o: int, t: int, same_speaker: bool, w: int) -> int:
    """2 * r(o, t); 0 for o == t."""
    if o > t:
        return 2
    d2 = doubled_distance(o, t, same_speaker)
    if d2 < -2 * w:
        return -2 * w
    return d2


def speaker_patterns(k: int):
    for bits in itertools.product("AB", repeat=k):
        yield list(bits)


def relation_multiset(speakers, w: int) -> dict[int, int]:
    counts: dict[int, int] = {}
    k = len(speakers)
    for t in range(1, k + 1):
        for o in range(1, k + 1):
            if o != t:
                r = doubled_relation(o, t, speakers[o - 1] == speakers[t - 1], w)
                counts[r] = counts.get(r, 0) + 1
    return counts
