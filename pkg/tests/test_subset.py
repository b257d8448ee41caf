from itertools import combinations

import numpy as np
import pytest

from balanceroute.scoring import HorizonScorer, StepScorer, discount_vector
from balanceroute.subset import (Candidate, best_subset_bitset, best_subset_exhaustive,
                                 best_subset_two_probe, reachable_sums)

W358 = [Candidate(0, 3), Candidate(1, 5), Candidate(2, 8)]


def bits(x):
    return {b for b in range(x.bit_length()) if (x >> b) & 1}


def test_exhaustive_example():
    c = best_subset_exhaustive(W358, StepScorer(10, 4), 2)
    assert (c.ids, c.delta_s, c.score) == ((2,), 8, 8.0)


def test_empty_and_single_windows():
    scorer = StepScorer(10, 4)
    for solve in (best_subset_exhaustive, best_subset_bitset):
        c = solve([], scorer, 3)
        assert c.ids == () and c.score == scorer(0)
        c = solve([Candidate(5, 7)], scorer, 1)
        assert (c.ids, c.score) == ((5,), 7.0)


def test_reachable_sums_example():
    dp = reachable_sums([3, 5, 8], 2)
    assert bits(dp[1]) == {3, 5, 8}
    assert bits(dp[2]) == {8, 11, 13}


def test_bitset_and_two_probe_example():
    ex = best_subset_exhaustive(W358, StepScorer(10, 4), 2)
    assert best_subset_bitset(W358, StepScorer(10, 4), 2) == ex
    tp = best_subset_two_probe(W358, 10, 4, max_card=2)
    assert tp == ex and tp.delta_s == 8


def test_two_probe_regimes():
    w = [Candidate(i, s) for i, s in enumerate([4, 9, 2])]
    assert best_subset_two_probe(w, 100, 8).delta_s == 15
    assert best_subset_two_probe(w, 1, 8).delta_s == 2


def test_bitset_rejects_oversized_window():
    with pytest.raises(ValueError):
        best_subset_bitset([Candidate(0, 600), Candidate(1, 600)], StepScorer(10, 4), 2, s_bound=1000)


def test_dp_matches_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(60):
        n = int(rng.integers(1, 13))
        sizes = [int(x) for x in rng.integers(1, 60, n)]
        dp = reachable_sums(sizes, n)
        for j in range(n + 1):
            assert bits(dp[j]) == {sum(c) for c in combinations(sizes, j)}


def _window(rng, n, lo=1, hi=5000):
    ids = rng.choice(10_000, n, replace=False)
    return [Candidate(int(i), int(s)) for i, s in zip(ids, rng.integers(lo, hi, n))]


def test_solvers_agree_with_ties():
    # small sizes force many equal sums and equal scores
    rng = np.random.default_rng(9)
    for _ in range(300):
        n = int(rng.integers(1, 9))
        w = _window(rng, n, 1, 6)
        card = int(rng.integers(1, n + 1))
        G = int(rng.integers(2, 9))
        m = int(rng.integers(0, 20))
        ex = best_subset_exhaustive(w, StepScorer(m, G), card)
        assert best_subset_bitset(w, StepScorer(m, G), card) == ex
        assert best_subset_two_probe(w, m, G, max_card=card) == ex
        H = int(rng.integers(0, 6))
        hs = HorizonScorer(rng.integers(0, 20, H + 1), discount_vector(H, 0.8), 1.0, float(rng.uniform(0.5, 20)))
        assert best_subset_bitset(w, hs, card) == best_subset_exhaustive(w, hs, card)
