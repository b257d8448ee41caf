"""Discrete-step trace replay.

Each step runs: arrivals, routing, decode advance (one token per active
request), departures, record. Step latency follows the barrier model
``a * max_g L_g(k) + b``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .model import ActiveEntry, CapacityError, ClusterState, Request, WorkerState
from .predictor import OutputHistory
from .routers import Dispatch, Router, RouterParams

log = logging.getLogger(__name__)

DEFAULT_STEP_TIME_A = 0.01
DEFAULT_STEP_TIME_B = 50.0


@dataclass(frozen=True)
class SimConfig:
    G: int = 8
    B: int = 32
    router: RouterParams = field(default_factory=RouterParams)
    step_time_a: float = DEFAULT_STEP_TIME_A
    step_time_b: float = DEFAULT_STEP_TIME_B
    max_steps: int = 10_000_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.G < 1 or self.B < 1:
            raise ValueError(f"need G >= 1 and B >= 1, got G={self.G}, B={self.B}")
        if self.step_time_a < 0 or self.step_time_b <= 0:
            raise ValueError("step-time model needs a >= 0 and b > 0")


@dataclass(frozen=True)
class StepRecord:
    k: int
    loads: tuple[int, ...]
    imbalance_total: int
    imbalance_spread: int
    admissions: int
    departures: int
    tokens: int
    step_time: float


@dataclass
class RunSummary:
    avg_imbalance_spread: float = 0.0
    avg_imbalance_total: float = 0.0
    total_output_tokens: int = 0
    total_time_ms: float = 0.0
    throughput_proxy: float = 0.0
    completions: int = 0
    steps: int = 0
    busy_steps: int = 0
    completion_steps: dict[int, int] = field(default_factory=dict)

    def as_dict(self, with_completions: bool = False) -> dict:
        d = {
            "avg_imbalance_spread": self.avg_imbalance_spread,
            "avg_imbalance_total": self.avg_imbalance_total,
            "total_output_tokens": self.total_output_tokens,
            "total_time_ms": self.total_time_ms,
            "throughput_proxy": self.throughput_proxy,
            "completions": self.completions,
            "steps": self.steps,
            "busy_steps": self.busy_steps,
        }
        if with_completions:
            d["completion_steps"] = {str(k): v for k, v in sorted(self.completion_steps.items())}
        return d


class SimulationIncomplete(RuntimeError):
    """``max_steps`` was reached with requests still waiting or active."""

    def __init__(self, message: str, summary: RunSummary, records: list[StepRecord]):
        super().__init__(message)
        self.summary = summary
        self.records = records


def step_time(max_load: int, a: float, b: float) -> float:
    if max_load < 0:
        raise ValueError(f"max load must be >= 0, got {max_load}")
    return a * max_load + b


def collect_metrics(records: Sequence[StepRecord]) -> RunSummary:
    """Aggregate step records; imbalance averages skip steps with no active request."""
    if not records:
        raise ValueError("cannot summarize an empty record list")
    busy = [r for r in records if r.tokens > 0]
    tokens = sum(r.tokens for r in records)
    total_time = sum(r.step_time for r in records)
    s = RunSummary(
        total_output_tokens=tokens,
        total_time_ms=total_time,
        throughput_proxy=tokens / (total_time / 1000.0) if total_time > 0 else 0.0,
        steps=len(records),
        busy_steps=len(busy),
    )
    if busy:
        s.avg_imbalance_spread = sum(r.imbalance_spread for r in busy) / len(busy)
        s.avg_imbalance_total = sum(r.imbalance_total for r in busy) / len(busy)
    return s


def validate_dispatch(dispatch: Dispatch, workers: Sequence[WorkerState], waiting_ids: set[int]) -> None:
    seen: set[int] = set()
    for g, ids in enumerate(dispatch):
        if len(workers[g].active) + len(ids) > workers[g].capacity:
            raise CapacityError(f"worker {g}: {len(workers[g].active)} active + {len(ids)} admitted "
                                f"> B={workers[g].capacity}")
        for i in ids:
            if i in seen:
                raise CapacityError(f"request {i} dispatched to more than one worker")
            if i not in waiting_ids:
                raise CapacityError(f"request {i} is not waiting")
            seen.add(i)


StepHook = Callable[[int, list[WorkerState], Router], None]


def run_trace(trace: Sequence[Request], config: SimConfig, history: Optional[OutputHistory] = None,
              router: Optional[Router] = None, on_step: Optional[StepHook] = None
              ) -> tuple[RunSummary, list[StepRecord]]:
    """Replay ``trace`` under ``config``.

    Fully idle stretches (nothing active, nothing waiting) are skipped and not
    recorded. ``on_step(k, workers, router)`` runs after routing, before the
    decode advance, and must not mutate state.
    """
    ids = [r.id for r in trace]
    if len(set(ids)) != len(ids):
        raise ValueError("request ids must be unique within a trace")
    order = sorted(trace, key=lambda r: (r.arrival_step, r.id))
    if router is None:
        router = Router(config.router, history)
    G, B = config.G, config.B
    a_coef, b_coef = config.step_time_a, config.step_time_b
    workers = [WorkerState(g, B) for g in range(G)]
    base = [0] * G  # sum of (s_i - x_i) over active entries
    waiting: list[Request] = []
    by_id = {r.id: r for r in order}
    departures: dict[int, list[tuple[int, ActiveEntry]]] = {}
    records: list[StepRecord] = []
    completion: dict[int, int] = {}
    n_active = 0
    nxt = 0
    n = len(order)
    k = order[0].arrival_step if n else 0

    while nxt < n or waiting or n_active:
        if k >= config.max_steps:
            summary = _summarize(records, completion)
            raise SimulationIncomplete(
                f"max_steps={config.max_steps} reached with {len(waiting)} waiting and "
                f"{n_active} active", summary, records)
        if not waiting and n_active == 0 and order[nxt].arrival_step > k:
            k = order[nxt].arrival_step
        while nxt < n and order[nxt].arrival_step <= k:
            waiting.append(order[nxt])
            nxt += 1

        admitted = 0
        if waiting and n_active < G * B:
            loads = [base[g] + len(workers[g].active) * k for g in range(G)]
            state = ClusterState(k, workers, waiting, loads)
            dispatch = router.dispatch(state)
            validate_dispatch(dispatch, workers, {r.id for r in waiting})
            taken: set[int] = set()
            for g, rids in enumerate(dispatch):
                for rid in rids:
                    req = by_id[rid]
                    entry = ActiveEntry(req, k)
                    workers[g].admit(entry)
                    router.on_admit(entry)
                    base[g] += req.prefill_len - k
                    departures.setdefault(k + req.output_len - 1, []).append((g, entry))
                    taken.add(rid)
            if taken:
                admitted = len(taken)
                n_active += admitted
                waiting = [r for r in waiting if r.id not in taken]

        if on_step is not None:
            on_step(k, workers, router)

        loads = tuple(base[g] + len(workers[g].active) * k for g in range(G))
        mx = max(loads)
        leaving = departures.pop(k, ())
        records.append(StepRecord(
            k=k,
            loads=loads,
            imbalance_total=G * mx - sum(loads),
            imbalance_spread=mx - min(loads),
            admissions=admitted,
            departures=len(leaving),
            tokens=n_active,
            step_time=step_time(mx, a_coef, b_coef),
        ))
        for g, entry in leaving:
            workers[g].active.remove(entry)
            base[g] -= entry.request.prefill_len - entry.assign_step
            completion[entry.request_id] = k
        n_active -= len(leaving)
        k += 1

    return _summarize(records, completion), records


def _summarize(records: list[StepRecord], completion: dict[int, int]) -> RunSummary:
    if not records:
        return RunSummary()
    s = collect_metrics(records)
    s.completions = len(completion)
    s.completion_steps = dict(completion)
    return s
