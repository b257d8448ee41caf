"""Stage-2 subset selection over a small candidate window.

Every scorer here depends on a subset only through its total prefill
``delta``. Ties are broken by (smaller cardinality, smaller delta,
lexicographically smaller sorted id tuple), so all three solvers return the
same subset.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

DEFAULT_R_MAX = 4
DEFAULT_S_BOUND = 1 << 20

Scorer = Callable[[int], float]


@dataclass(frozen=True)
class Candidate:
    id: int
    s: int


@dataclass(frozen=True)
class SubsetChoice:
    ids: tuple[int, ...]
    delta_s: int
    score: float

    def _rank(self):
        return (-self.score, len(self.ids), self.delta_s, self.ids)


def _empty(scorer: Scorer) -> SubsetChoice:
    return SubsetChoice((), 0, scorer(0))


def _check_card(window: Sequence[Candidate], max_card: int) -> int:
    if max_card < 0:
        raise ValueError(f"max_cardinality must be >= 0, got {max_card}")
    return min(max_card, len(window))


def best_subset_exhaustive(window: Sequence[Candidate], scorer: Scorer, max_card: int) -> SubsetChoice:
    """Enumerate every non-empty subset of size <= ``max_card``."""
    kmax = _check_card(window, max_card)
    if kmax == 0:
        return _empty(scorer)
    items = sorted(window, key=lambda c: c.id)
    best = None
    best_rank = None
    for j in range(1, kmax + 1):
        for combo in combinations(items, j):
            delta = sum(c.s for c in combo)
            choice = SubsetChoice(tuple(c.id for c in combo), delta, scorer(delta))
            rank = choice._rank()
            if best_rank is None or rank < best_rank:
                best, best_rank = choice, rank
    return best


def reachable_sums(sizes: Sequence[int], max_card: int) -> list[int]:
    """Bitmask per cardinality ``j``: bit ``b`` set iff some ``j``-subset sums to ``b``."""
    dp = [0] * (max_card + 1)
    dp[0] = 1
    for s in sizes:
        for j in range(max_card, 0, -1):
            dp[j] |= dp[j - 1] << s
    return dp


def _set_bits(x: int):
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


class _BitsetTable:
    """Suffix reachable-sum snapshots over id-sorted items for backtracking."""

    def __init__(self, window: Sequence[Candidate], kmax: int, s_bound: int):
        self.items = sorted(window, key=lambda c: c.id)
        if sum(c.s for c in self.items) > s_bound:
            raise ValueError(f"window total {sum(c.s for c in self.items)} exceeds S_bound={s_bound}")
        self.kmax = kmax
        n = len(self.items)
        # suffix[t][j]: sums reachable with j items drawn from items[t:]
        suffix = [[0] * (kmax + 1) for _ in range(n + 1)]
        suffix[n][0] = 1
        for t in range(n - 1, -1, -1):
            prev = suffix[t + 1]
            cur = list(prev)
            s = self.items[t].s
            for j in range(kmax, 0, -1):
                cur[j] |= prev[j - 1] << s
            suffix[t] = cur
        self.suffix = suffix

    @property
    def dp(self) -> list[int]:
        return self.suffix[0]

    def recover(self, j: int, delta: int) -> tuple[int, ...]:
        """Lexicographically smallest id tuple of size ``j`` summing to ``delta``."""
        chosen = []
        for t, item in enumerate(self.items):
            if j == 0:
                break
            rest = delta - item.s
            if rest >= 0 and (self.suffix[t + 1][j - 1] >> rest) & 1:
                chosen.append(item.id)
                j -= 1
                delta = rest
        assert j == 0 and delta == 0
        return tuple(chosen)


def best_subset_bitset(window: Sequence[Candidate], scorer: Scorer, max_card: int,
                       s_bound: int = DEFAULT_S_BOUND) -> SubsetChoice:
    """Score every reachable (cardinality, sum) pair from shift-OR bitmasks."""
    kmax = _check_card(window, max_card)
    if kmax == 0:
        return _empty(scorer)
    table = _BitsetTable(window, kmax, s_bound)
    best_key = None
    for j in range(1, kmax + 1):
        for b in _set_bits(table.dp[j]):
            key = (-scorer(b), j, b)
            if best_key is None or key < best_key:
                best_key = key
    neg, j, b = best_key
    return SubsetChoice(table.recover(j, b), b, -neg)


def best_subset_two_probe(window: Sequence[Candidate], m_g: int, G: int,
                          s_bound: int = DEFAULT_S_BOUND, max_card: int | None = None) -> SubsetChoice:
    """Single-kink shortcut for the single-step score.

    Only the largest reachable sum ``<= m_g`` and the smallest reachable sum
    ``> m_g`` can be optimal, since the score rises strictly below the kink
    and falls strictly above it (``G >= 2``).
    """
    if G < 2:
        raise ValueError("two-probe selection needs G >= 2 (the score is flat past the kink at G = 1)")
    from .scoring import fscore_step

    kmax = _check_card(window, len(window) if max_card is None else max_card)
    if kmax == 0:
        return SubsetChoice((), 0, fscore_step(0, m_g, G))
    table = _BitsetTable(window, kmax, s_bound)
    below = above = None  # (delta, cardinality)
    for j in range(1, kmax + 1):
        mask = table.dp[j]
        low = mask & ((1 << (m_g + 1)) - 1) if m_g >= 0 else 0
        if low:
            b = low.bit_length() - 1
            if below is None or b > below[0]:
                below = (b, j)
        high = mask >> (m_g + 1) if m_g >= 0 else mask
        if high:
            b = (high & -high).bit_length() - 1 + (m_g + 1 if m_g >= 0 else 0)
            if above is None or b < above[0]:
                above = (b, j)
    best_key = None
    for probe in (below, above):
        if probe is None:
            continue
        b, j = probe
        key = (-fscore_step(b, m_g, G), j, b)
        if best_key is None or key < best_key:
            best_key = key
    neg, j, b = best_key
    return SubsetChoice(table.recover(j, b), b, -neg)
