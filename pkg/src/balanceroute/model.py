"""Core serving model: requests, per-worker decode state and imbalance metrics.

Loads are exact integer token counts. A request admitted at step ``x`` with
prefill ``s`` contributes ``s + (k - x)`` tokens at step ``k`` and occupies
steps ``x .. x + o - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence


@dataclass(frozen=True)
class Request:
    """One trace entry.

    ``output_len`` is ground truth. Routers must never read it; only the
    simulator and the oracle predictor do.
    """

    id: int
    arrival_step: int
    prefill_len: int
    output_len: int
    prompt_key: Optional[str] = None

    def __post_init__(self) -> None:
        if self.prefill_len < 1:
            raise ValueError(f"request {self.id}: prefill_len must be >= 1, got {self.prefill_len}")
        if self.output_len < 1:
            raise ValueError(f"request {self.id}: output_len must be >= 1, got {self.output_len}")
        if self.arrival_step < 0:
            raise ValueError(f"request {self.id}: arrival_step must be >= 0, got {self.arrival_step}")


@dataclass
class ActiveEntry:
    request: Request
    assign_step: int
    prediction: Any = None

    @property
    def request_id(self) -> int:
        return self.request.id

    @property
    def prefill_len(self) -> int:
        return self.request.prefill_len

    def age(self, k: int) -> int:
        return k - self.assign_step

    def load(self, k: int) -> int:
        return step_workload(self.request.prefill_len, k - self.assign_step + 1)


@dataclass
class WorkerState:
    worker_id: int
    capacity: int
    active: list[ActiveEntry] = field(default_factory=list)

    @property
    def free(self) -> int:
        return self.capacity - len(self.active)

    def admit(self, entry: ActiveEntry) -> None:
        if len(self.active) >= self.capacity:
            raise CapacityError(f"worker {self.worker_id} is full (B={self.capacity})")
        self.active.append(entry)


@dataclass
class ClusterState:
    """Snapshot handed to a router at step ``k``.

    ``waiting`` is FIFO by (arrival_step, id).
    """

    k: int
    workers: list[WorkerState]
    waiting: list[Request]
    cached_loads: Optional[list[int]] = None

    @property
    def G(self) -> int:
        return len(self.workers)

    def loads(self) -> list[int]:
        if self.cached_loads is not None:
            return list(self.cached_loads)
        return [instantaneous_load(w, self.k) for w in self.workers]


class CapacityError(RuntimeError):
    """A dispatch broke the per-worker concurrency limit or disjointness."""


def step_workload(s: int, j: int) -> int:
    """KV workload of a request with prefill ``s`` during its ``j``-th decode step."""
    if j < 1:
        raise ValueError(f"lifetime steps are 1-indexed, got j={j}")
    if s < 1:
        raise ValueError(f"prefill length must be >= 1, got s={s}")
    return s + j - 1


def instantaneous_load(worker: WorkerState, k: int) -> int:
    return sum(e.load(k) for e in worker.active)


def imbalance_total(loads: Sequence[int]) -> int:
    """Idle work relative to the heaviest worker: ``G * max - sum``."""
    if len(loads) == 0:
        raise ValueError("imbalance of an empty load vector is undefined")
    return len(loads) * max(loads) - sum(loads)


def imbalance_spread(loads: Sequence[int]) -> int:
    if len(loads) == 0:
        raise ValueError("imbalance of an empty load vector is undefined")
    return max(loads) - min(loads)
