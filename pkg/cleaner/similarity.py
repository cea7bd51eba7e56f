"""
Gestalt Sequence Similarity
Ratcliff-Obershelp matching: find the longest common block, recurse on
both sides, and score 2*M / (|a| + |b|). Behaves like the reference
sequence matcher with its junk and auto-junk heuristics switched off.
Comparison is per character on the raw code text.
"""

from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple


@dataclass(frozen=True)
class MatchBlock:
    a_start: int
    b_start: int
    size: int

    def as_tuple(self) -> Tuple[int, int, int]:
        return (self.a_start, self.b_start, self.size)


def _index_b(b: Sequence) -> Dict[object, List[int]]:
    b2j: Dict[object, List[int]] = defaultdict(list)
    for j, element in enumerate(b):
        b2j[element].append(j)
    return b2j


def longest_matching_block(a: Sequence, b: Sequence,
                           a_range: Optional[Tuple[int, int]] = None,
                           b_range: Optional[Tuple[int, int]] = None,
                           _b2j: Optional[Dict[object, List[int]]] = None) -> MatchBlock:
    """
    Leftmost-longest common contiguous block of a[alo:ahi] and b[blo:bhi].

    Among maximal blocks the one starting earliest in a wins, ties broken
    by the earliest start in b. Size 0 when nothing matches.
    """
    alo, ahi = a_range if a_range is not None else (0, len(a))
    blo, bhi = b_range if b_range is not None else (0, len(b))
    if not (0 <= alo <= ahi <= len(a) and 0 <= blo <= bhi <= len(b)):
        raise IndexError(f"ranges {(alo, ahi)}, {(blo, bhi)} out of bounds")
    b2j = _b2j if _b2j is not None else _index_b(b)

    besti, bestj, bestsize = alo, blo, 0
    # j2len[j] = length of the longest match ending with a[i-1] and b[j]
    j2len: Dict[int, int] = {}
    for i in range(alo, ahi):
        newj2len: Dict[int, int] = {}
        for j in b2j.get(a[i], ()):
            if j < blo:
                continue
            if j >= bhi:
                break
            k = newj2len[j] = j2len.get(j - 1, 0) + 1
            if k > bestsize:
                besti, bestj, bestsize = i - k + 1, j - k + 1, k
        j2len = newj2len
    return MatchBlock(besti, bestj, bestsize)


def matching_blocks(a: Sequence, b: Sequence) -> List[MatchBlock]:
    """
    All matching blocks in increasing order, adjacent blocks merged,
    terminated by the sentinel (len(a), len(b), 0).
    """
    la, lb = len(a), len(b)
    b2j = _index_b(b)
    queue = [(0, la, 0, lb)]
    found = []
    while queue:
        alo, ahi, blo, bhi = queue.pop()
        block = longest_matching_block(a, b, (alo, ahi), (blo, bhi), _b2j=b2j)
        i, j, k = block.as_tuple()
        if k:
            found.append((i, j, k))
            if alo < i and blo < j:
                queue.append((alo, i, blo, j))
            if i + k < ahi and j + k < bhi:
                queue.append((i + k, ahi, j + k, bhi))
    found.sort()

    merged: List[MatchBlock] = []
    i1 = j1 = k1 = 0
    for i2, j2, k2 in found:
        if i1 + k1 == i2 and j1 + k1 == j2:
            k1 += k2
        else:
            if k1:
                merged.append(MatchBlock(i1, j1, k1))
            i1, j1, k1 = i2, j2, k2
    if k1:
        merged.append(MatchBlock(i1, j1, k1))
    merged.append(MatchBlock(la, lb, 0))
    return merged


def matched_size(a: Sequence, b: Sequence) -> int:
    return sum(block.size for block in matching_blocks(a, b))


def ratio(a: str, b: str) -> float:
    """Similarity in [0, 1]; two empty strings are identical (1.0)"""
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    return 2.0 * matched_size(a, b) / total
