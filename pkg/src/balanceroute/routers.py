"""Routing policies mapping a cluster snapshot to per-worker admissions.

Baselines dispatch waiting requests one at a time in FIFO order. The
balance routers pool the whole waiting set once per step and run two stages:
a greedy fill while free slots are plentiful, then margin-aware subset
selection once they are scarce.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .model import ActiveEntry, ClusterState
from .predictor import OutputHistory, PredictionCache, Predictor, PredictorConfig
from .projection import HorizonProjection, project_fast
from .scoring import HorizonScorer, ScoreParams, StepScorer, discount_vector
from .subset import (DEFAULT_R_MAX, DEFAULT_S_BOUND, Candidate, best_subset_bitset,
                     best_subset_exhaustive, best_subset_two_probe)


class RouterKind(str, Enum):
    RANDOM = "random"
    ROUND_ROBIN = "rr"
    P2C = "p2c"
    JSQ = "jsq"
    BR0 = "br0"
    BRH = "brh"


BASELINES = (RouterKind.RANDOM, RouterKind.ROUND_ROBIN, RouterKind.P2C, RouterKind.JSQ)


@dataclass(frozen=True)
class RouterParams:
    kind: RouterKind = RouterKind.BR0
    s_greedy: Optional[int] = None  # None -> G
    r_max: int = DEFAULT_R_MAX
    score: ScoreParams = field(default_factory=ScoreParams)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    rng_seed: int = 0
    p2c_metric: str = "load"  # or "count"
    s_bound: int = DEFAULT_S_BOUND

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", RouterKind(self.kind))
        if self.s_greedy is not None and self.s_greedy < 0:
            raise ValueError(f"s_greedy must be >= 0, got {self.s_greedy}")
        if self.r_max < 1:
            raise ValueError(f"r_max must be >= 1, got {self.r_max}")
        if self.p2c_metric not in ("load", "count"):
            raise ValueError(f"p2c_metric must be 'load' or 'count', got {self.p2c_metric!r}")


# per-worker admitted request ids, indexed by worker
Dispatch = list[list[int]]


def _empty_dispatch(G: int) -> Dispatch:
    return [[] for _ in range(G)]


def _caps(state: ClusterState) -> list[int]:
    return [w.capacity - len(w.active) for w in state.workers]


def route_random(state: ClusterState, rng: random.Random) -> Dispatch:
    out = _empty_dispatch(state.G)
    cap = _caps(state)
    free = [g for g in range(state.G) if cap[g] > 0]
    for req in state.waiting:
        if not free:
            break
        g = free[rng.randrange(len(free))]
        out[g].append(req.id)
        cap[g] -= 1
        if cap[g] == 0:
            free.remove(g)
    return out


class RoundRobinCursor:
    def __init__(self) -> None:
        self.pos = 0


def route_round_robin(state: ClusterState, cursor: RoundRobinCursor) -> Dispatch:
    G = state.G
    out = _empty_dispatch(G)
    cap = _caps(state)
    remaining = sum(cap)
    for req in state.waiting:
        if remaining == 0:
            break
        for step in range(G):
            g = (cursor.pos + step) % G
            if cap[g] > 0:
                out[g].append(req.id)
                cap[g] -= 1
                remaining -= 1
                cursor.pos = (g + 1) % G
                break
    return out


def route_p2c(state: ClusterState, rng: random.Random, metric: str = "load") -> Dispatch:
    """Two distinct uniform samples; the lighter one wins if it has room."""
    G = state.G
    if G < 2:
        raise ValueError("power-of-two-choices needs at least two workers")
    out = _empty_dispatch(G)
    cap = _caps(state)
    remaining = sum(cap)
    if metric == "load":
        weight = state.loads()
    else:
        weight = [len(w.active) for w in state.workers]
    for req in state.waiting:
        if remaining == 0:
            break
        a, b = rng.sample(range(G), 2)
        first, second = (a, b) if (weight[a], a) <= (weight[b], b) else (b, a)
        if cap[first] > 0:
            g = first
        elif cap[second] > 0:
            g = second
        else:
            continue
        out[g].append(req.id)
        cap[g] -= 1
        remaining -= 1
        weight[g] += req.prefill_len if metric == "load" else 1
    return out


def route_jsq(state: ClusterState) -> Dispatch:
    G = state.G
    out = _empty_dispatch(G)
    cap = _caps(state)
    count = [len(w.active) for w in state.workers]
    remaining = sum(cap)
    for req in state.waiting:
        if remaining == 0:
            break
        g = min((g for g in range(G) if cap[g] > 0), key=lambda g: (count[g], g))
        out[g].append(req.id)
        cap[g] -= 1
        count[g] += 1
        remaining -= 1
    return out


class _StepMargins:
    """Single-step loads, max and margins with in-round updates."""

    def __init__(self, loads: Sequence[int]):
        self.loads = list(loads)
        self.M = max(self.loads)
        self.G = len(self.loads)

    def load(self, g: int) -> int:
        return self.loads[g]

    def key_margin(self, g: int) -> int:
        return self.M - self.loads[g]

    def scorer(self, g: int) -> StepScorer:
        return StepScorer(self.M - self.loads[g], self.G)

    def admit(self, g: int, delta: int) -> None:
        self.loads[g] += delta
        if self.loads[g] > self.M:
            self.M = self.loads[g]


class _HorizonMargins:
    """Projected loads over offsets 0..H with in-round constant-delta updates."""

    def __init__(self, proj: HorizonProjection, params: ScoreParams):
        self.proj = proj
        self.d = discount_vector(proj.H, params.gamma)
        self.alpha = params.alpha
        self.beta = params.beta

    def load(self, g: int) -> int:
        return int(self.proj.loads[g, 0])

    def key_margin(self, g: int) -> int:
        return self.proj.min_margin(g)

    def scorer(self, g: int) -> HorizonScorer:
        return HorizonScorer(self.proj.margins[g].copy(), self.d, self.alpha, self.beta)

    def admit(self, g: int, delta: int) -> None:
        self.proj.admit(g, delta)


def _two_stage(state: ClusterState, margins, s_greedy: int, r_max: int, select) -> Dispatch:
    """Greedy fill then refined allocation, shared by BR-0 and BR-H.

    ``select(window, scorer, max_card, g)`` returns the best :class:`SubsetChoice`.
    """
    G = state.G
    out = _empty_dispatch(G)
    cap = _caps(state)
    s_tot = sum(cap)
    waiting = list(state.waiting)
    if s_tot == 0 or not waiting:
        return out

    # Stage 1: abundant capacity, one request at a time
    while s_tot > s_greedy and waiting:
        g = max(range(G), key=lambda x: (cap[x], -margins.load(x), -x))
        scorer = margins.scorer(g)
        first_by_s: dict[int, int] = {}
        for pos, req in enumerate(waiting):
            first_by_s.setdefault(req.prefill_len, pos)
        sizes = sorted(first_by_s)
        scores = scorer.many(sizes)
        # ties across sizes go to the smaller size
        best = int(np.argmax(scores))
        pos = first_by_s[sizes[best]]
        req = waiting.pop(pos)
        out[g].append(req.id)
        margins.admit(g, req.prefill_len)
        cap[g] -= 1
        s_tot -= 1

    # Stage 2: scarce capacity, subset selection per worker
    queued = {g for g in range(G) if cap[g] > 0}
    while queued and waiting:
        g = max(queued, key=lambda x: (cap[x], margins.key_margin(x), -x))
        head = heapq.nsmallest(r_max, range(len(waiting)),
                               key=lambda p: (-waiting[p].prefill_len, p))
        window = [Candidate(waiting[p].id, waiting[p].prefill_len) for p in head]
        scorer = margins.scorer(g)
        choice = select(window, scorer, min(cap[g], r_max), g)
        if choice.score <= 0:
            # starvation guard
            choice = best_subset_exhaustive(window, scorer, 1)
        chosen = set(choice.ids)
        out[g].extend(choice.ids)
        waiting = [r for r in waiting if r.id not in chosen]
        margins.admit(g, choice.delta_s)
        cap[g] -= len(choice.ids)
        if cap[g] == 0:
            queued.discard(g)
    return out


def br0_dispatch(state: ClusterState, params: RouterParams) -> Dispatch:
    G = state.G
    s_greedy = G if params.s_greedy is None else params.s_greedy
    margins = _StepMargins(state.loads())

    def select(window, scorer, max_card, g):
        if G >= 2:
            return best_subset_two_probe(window, scorer.m_g, G, params.s_bound, max_card)
        return best_subset_exhaustive(window, scorer, max_card)

    return _two_stage(state, margins, s_greedy, params.r_max, select)


def brh_dispatch(state: ClusterState, params: RouterParams,
                 projection: HorizonProjection) -> Dispatch:
    """BR-H on a projection built once for this round; ``projection`` is consumed."""
    G = state.G
    s_greedy = G if params.s_greedy is None else params.s_greedy
    margins = _HorizonMargins(projection, params.score)

    def select(window, scorer, max_card, g):
        if len(window) <= 4:
            return best_subset_exhaustive(window, scorer, max_card)
        return best_subset_bitset(window, scorer, max_card, params.s_bound)

    return _two_stage(state, margins, s_greedy, params.r_max, select)


class Router:
    """Stateful routing policy owned by one simulation run."""

    def __init__(self, params: RouterParams, history: Optional[OutputHistory] = None,
                 log_refreshes: bool = False):
        self.params = params
        self.kind = params.kind
        self.rng = random.Random(params.rng_seed)
        self.cursor = RoundRobinCursor()
        self.cache: Optional[PredictionCache] = None
        self.H = params.score.horizon if self.kind is RouterKind.BRH else 0
        if self.kind is RouterKind.BRH and self.H > 0:
            cfg = params.predictor
            if cfg.horizon != self.H:
                cfg = PredictorConfig(cfg.kind, self.H, cfg.refresh_period, cfg.gate_threshold,
                                      cfg.min_key_samples)
            self.cache = PredictionCache(Predictor(cfg, history), log_events=log_refreshes)

    def on_admit(self, entry: ActiveEntry) -> None:
        if self.cache is not None:
            self.cache.admit(entry)

    def projection(self, state: ClusterState) -> HorizonProjection:
        """Horizon projection of the current active sets, refreshing cached predictions."""
        k = state.k
        if self.cache is None:
            loads = np.array(state.loads(), dtype=np.int64).reshape(-1, 1)
            return HorizonProjection.from_loads(loads)
        c_hat = self.cache.c_hat
        snapshot = [[(e.request.prefill_len, k - e.assign_step, c_hat(e, k)) for e in w.active]
                    for w in state.workers]
        return project_fast(snapshot, self.H)

    def dispatch(self, state: ClusterState) -> Dispatch:
        kind = self.kind
        if kind is RouterKind.RANDOM:
            return route_random(state, self.rng)
        if kind is RouterKind.ROUND_ROBIN:
            return route_round_robin(state, self.cursor)
        if kind is RouterKind.P2C:
            return route_p2c(state, self.rng, self.params.p2c_metric)
        if kind is RouterKind.JSQ:
            return route_jsq(state)
        if not state.waiting or all(len(w.active) >= w.capacity for w in state.workers):
            return _empty_dispatch(state.G)
        if kind is RouterKind.BR0:
            return br0_dispatch(state, self.params)
        return brh_dispatch(state, self.params, self.projection(state))
