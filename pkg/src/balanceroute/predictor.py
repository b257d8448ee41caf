"""Short-horizon prediction of each active request's in-window contribution.

A predictor produces ``c_hat``: the expected number of the next ``H`` decode
steps during which a request stays active. Survival-style realizations read a
termination probability and a conditional mean remaining length off a sorted
output-length history; the oracle reads the trace ground truth.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .model import ActiveEntry, Request


class PredictorKind(str, Enum):
    ORACLE = "oracle"
    SURVIVAL = "survival"
    EXACT_MATCH = "exactmatch"


@dataclass(frozen=True)
class PredictorConfig:
    kind: PredictorKind = PredictorKind.ORACLE
    horizon: int = 80
    refresh_period: Optional[int] = None  # None -> max(1, H // 2)
    gate_threshold: float = 0.5
    min_key_samples: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PredictorKind(self.kind))
        if self.horizon < 1:
            raise ValueError(f"predictor horizon must be >= 1, got {self.horizon}")
        if self.refresh_period is not None and self.refresh_period < 1:
            raise ValueError(f"refresh period must be >= 1, got {self.refresh_period}")

    @property
    def delta_t(self) -> int:
        if self.refresh_period is not None:
            return self.refresh_period
        return max(1, self.horizon // 2)


class _SortedOutputs:
    """Sorted output lengths with prefix sums for O(log n) CDF queries."""

    __slots__ = ("values", "prefix", "n")

    def __init__(self, outputs: Iterable[int]):
        self.values = sorted(int(o) for o in outputs)
        self.n = len(self.values)
        self.prefix = [0]
        for v in self.values:
            self.prefix.append(self.prefix[-1] + v)

    def count_le(self, t: int) -> int:
        return bisect.bisect_right(self.values, t)

    def stages(self, a: int, H: int) -> tuple[float, float]:
        lo = self.count_le(a)
        if lo == self.n:
            # past every training output
            return 1.0, float(H)
        hi = self.count_le(a + H)
        p = (hi - lo) / (self.n - lo)
        cnt = hi - lo
        if cnt == 0:
            return p, float(H)
        mu = (self.prefix[hi] - self.prefix[lo] - cnt * a) / cnt
        return p, mu


class OutputHistory:
    """Training output-length history, optionally with per-prompt-key buckets.

    Fitting is just sorting.
    """

    def __init__(self, outputs: Sequence[int], keyed: Optional[Mapping[str, Sequence[int]]] = None):
        if len(outputs) == 0:
            raise ValueError("output history must be non-empty")
        self._marginal = _SortedOutputs(outputs)
        self._keyed = {k: _SortedOutputs(v) for k, v in (keyed or {}).items() if len(v) > 0}

    @classmethod
    def fit(cls, requests: Iterable[Request]) -> "OutputHistory":
        outputs: list[int] = []
        keyed: dict[str, list[int]] = {}
        for r in requests:
            outputs.append(r.output_len)
            if r.prompt_key is not None:
                keyed.setdefault(r.prompt_key, []).append(r.output_len)
        return cls(outputs, keyed)

    @property
    def outputs(self) -> list[int]:
        return list(self._marginal.values)

    def keys(self) -> list[str]:
        return sorted(self._keyed)

    def key_size(self, key: Optional[str]) -> int:
        if key is None or key not in self._keyed:
            return 0
        return self._keyed[key].n

    def cdf(self, t: int) -> float:
        return self._marginal.count_le(t) / self._marginal.n

    def without_keys(self) -> "OutputHistory":
        return OutputHistory(self._marginal.values)

    def _bucket(self, key: Optional[str], min_samples: int) -> _SortedOutputs:
        if key is not None:
            b = self._keyed.get(key)
            if b is not None and b.n >= min_samples:
                return b
        return self._marginal


def p_fin_survival(a: int, H: int, hist: OutputHistory) -> float:
    """Probability of finishing within ``H`` more steps given age ``a``."""
    return hist._marginal.stages(a, H)[0]


def mu_rem_survival(a: int, H: int, hist: OutputHistory) -> float:
    """Mean remaining length conditioned on finishing within the window."""
    return hist._marginal.stages(a, H)[1]


def composite_contribution(p_fin: float, mu_rem: float, H: int) -> float:
    c = (1.0 - p_fin) * H + p_fin * mu_rem
    return min(max(c, 0.0), float(H))


def oracle_contribution(remaining: int, H: int) -> int:
    return min(remaining, H)


def exactmatch_stages(key: Optional[str], a: int, H: int, hist: OutputHistory,
                      min_samples: int = 1) -> tuple[float, float]:
    return hist._bucket(key, min_samples).stages(a, H)


def exactmatch_contribution(key: Optional[str], a: int, H: int, hist: OutputHistory,
                            min_samples: int = 1) -> float:
    p, mu = exactmatch_stages(key, a, H, hist, min_samples)
    return composite_contribution(p, mu, H)


@dataclass(frozen=True)
class Refresh:
    """Outcome of one predictor re-query."""

    c_hat: float
    p_fin: Optional[float] = None
    mu_rem: Optional[float] = None
    gated: bool = False


class Predictor:
    """Turns (request, age) into a gated, floored contribution estimate."""

    def __init__(self, config: PredictorConfig, history: Optional[OutputHistory] = None):
        if config.kind is not PredictorKind.ORACLE and history is None:
            raise ValueError(f"{config.kind.value} predictor needs a fitted OutputHistory")
        self.config = config
        self.history = history
        self.H = config.horizon

    def query(self, request: Request, age: int) -> Refresh:
        H = self.H
        if self.config.kind is PredictorKind.ORACLE:
            # sole sanctioned reader of ground truth
            return Refresh(float(oracle_contribution(request.output_len - age, H)))
        key = request.prompt_key if self.config.kind is PredictorKind.EXACT_MATCH else None
        p, mu = exactmatch_stages(key, age, H, self.history, self.config.min_key_samples)
        if p >= self.config.gate_threshold:
            return Refresh(max(1.0, composite_contribution(p, mu, H)), p, mu, gated=False)
        return Refresh(float(H), p, mu, gated=True)


@dataclass(frozen=True)
class PredictionState:
    c_hat: float
    steps_since_refresh: int = 0
    horizon: int = 80


def refresh_prediction(state: PredictionState, age: int, config: PredictorConfig,
                       query: Callable[[int], Refresh]) -> PredictionState:
    """Advance one decode step: decrement, then re-query if due or below the floor.

    ``age`` is the request's age after the step; ``query`` maps an age to a
    :class:`Refresh` (for instance ``lambda a: predictor.query(request, a)``).
    """
    c = state.c_hat - 1.0
    since = state.steps_since_refresh + 1
    if since >= config.delta_t or c < 1.0:
        return PredictionState(query(age).c_hat, 0, state.horizon)
    return replace(state, c_hat=c, steps_since_refresh=since)


@dataclass(frozen=True)
class RefreshEvent:
    step: int
    request_id: int
    age: int
    c_before: float
    c_after: float
    p_fin: Optional[float]
    gated: bool
    scheduled: bool


class _Cached:
    __slots__ = ("c0", "anchor")

    def __init__(self, c0: float, anchor: int):
        self.c0 = c0
        self.anchor = anchor


class PredictionCache:
    """Per-run cache of ``c_hat`` for active requests.

    Values are advanced lazily: between refreshes ``c_hat`` falls by one per
    step, so the value at step ``k`` is ``c0 - (k - anchor)``. Catching up
    replays every refresh at the step it would have fired, which makes the
    result identical to stepping :func:`refresh_prediction` once per step.
    """

    def __init__(self, predictor: Predictor, log_events: bool = False):
        self.predictor = predictor
        self.delta_t = predictor.config.delta_t
        self.events: Optional[list[RefreshEvent]] = [] if log_events else None
        # an oracle refreshed every step is just the truncated remaining length
        self._closed_form = (predictor.config.kind is PredictorKind.ORACLE and self.delta_t == 1
                             and not log_events)

    def admit(self, entry: ActiveEntry) -> None:
        r = self.predictor.query(entry.request, 0)
        entry.prediction = _Cached(r.c_hat, entry.assign_step)
        if self.events is not None:
            self.events.append(RefreshEvent(entry.assign_step, entry.request_id, 0, math.nan,
                                            r.c_hat, r.p_fin, r.gated, True))

    def c_hat(self, entry: ActiveEntry, k: int) -> float:
        if self._closed_form:
            return float(min(entry.request.output_len - (k - entry.assign_step), self.predictor.H))
        st = entry.prediction
        while True:
            t = min(self.delta_t, math.floor(st.c0))
            due = st.anchor + t
            if due > k:
                return st.c0 - (k - st.anchor)
            age = due - entry.assign_step
            r = self.predictor.query(entry.request, age)
            if self.events is not None:
                self.events.append(RefreshEvent(due, entry.request_id, age, st.c0 - t, r.c_hat,
                                                r.p_fin, r.gated, t >= self.delta_t))
            st.c0 = r.c_hat
            st.anchor = due
