"""Sweep orchestration: cross or grid geometry over run-config axes."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Optional, Sequence

from ..model import Request
from ..predictor import OutputHistory
from ..simulator import RunSummary, run_trace
from .config import RunConfig
from .traces import SyntheticSpec, generate_synthetic

log = logging.getLogger(__name__)

MAX_RUNS = 10_000
# training draws for fitted predictors use a disjoint seed stream
HISTORY_SEED_OFFSET = 1_000_003


@dataclass
class SweepSpec:
    """Axes over :class:`RunConfig` fields.

    ``cross`` varies one axis at a time around ``base`` (the center cell is
    shared); ``grid`` takes the full product. The workload is either a fixed
    ``trace`` or a ``synthetic`` spec. With a synthetic workload and a ``G``
    axis, rate and count scale with ``G / base.G`` so per-worker offered load
    stays constant.
    """

    base: RunConfig
    axes: dict[str, list]
    mode: str = "cross"
    trace: Optional[list[Request]] = None
    synthetic: Optional[SyntheticSpec] = None
    history: Optional[OutputHistory] = None
    scale_with_G: bool = True
    max_runs: int = MAX_RUNS

    def __post_init__(self) -> None:
        if self.mode not in ("cross", "grid"):
            raise ValueError(f"sweep mode must be 'cross' or 'grid', got {self.mode!r}")
        if not self.axes or any(len(v) == 0 for v in self.axes.values()):
            raise ValueError("a sweep needs at least one axis, each with at least one value")
        known = {f.name for f in fields(RunConfig)}
        bad = sorted(set(self.axes) - known)
        if bad:
            raise ValueError(f"unknown sweep axes: {', '.join(bad)}")
        if (self.trace is None) == (self.synthetic is None):
            raise ValueError("give exactly one of a fixed trace or a synthetic workload")
        n = len(self.cells())
        if n > self.max_runs:
            raise ValueError(f"sweep has {n} cells, above the limit of {self.max_runs}")

    def cells(self) -> list[dict[str, Any]]:
        names = list(self.axes)
        if self.mode == "grid":
            raw = [dict(zip(names, combo)) for combo in itertools.product(*(self.axes[n] for n in names))]
        else:
            center = {n: getattr(self.base, n) for n in names}
            raw = []
            for n in names:
                for v in self.axes[n]:
                    raw.append({**center, n: v})
        out, seen = [], set()
        for c in raw:
            key = tuple(sorted((k, _norm(v)) for k, v in c.items()))
            if key not in seen:
                seen.add(key)
                out.append(c)
        return out


def _norm(v: Any) -> Any:
    # 48 and 48.0 name the same cell
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    return v


@dataclass
class SweepCell:
    params: dict[str, Any]
    summary: Optional[RunSummary] = None
    error: Optional[str] = None
    requests: int = 0
    rate_per_worker: Optional[float] = None

    def row(self) -> dict[str, Any]:
        row: dict[str, Any] = dict(self.params)
        row["requests"] = self.requests
        row["rate_per_worker"] = self.rate_per_worker
        row["error"] = self.error
        if self.summary is not None:
            row.update(self.summary.as_dict())
        return row


@dataclass
class SweepReport:
    cells: list[SweepCell] = field(default_factory=list)

    def rows(self) -> list[dict[str, Any]]:
        return [c.row() for c in self.cells]

    @property
    def failures(self) -> list[SweepCell]:
        return [c for c in self.cells if c.error is not None]


def cell_workload(spec: SweepSpec, cfg: RunConfig) -> tuple[list[Request], Optional[SyntheticSpec]]:
    if spec.trace is not None:
        return spec.trace, None
    syn = spec.synthetic
    scale = cfg.G / spec.base.G if spec.scale_with_G else 1.0
    syn = replace(syn, rate=syn.rate * scale, count=int(round(syn.count * scale)),
                  seed=cfg.seed if "seed" in spec.axes else syn.seed)
    return generate_synthetic(syn), syn


def fit_history(trace: Sequence[Request], synthetic: Optional[SyntheticSpec]) -> OutputHistory:
    """Output history for fitted predictors.

    Synthetic workloads train on an independent draw of the same spec; fixed
    traces fit on their own outputs.
    """
    if synthetic is not None:
        train = generate_synthetic(replace(synthetic, seed=synthetic.seed + HISTORY_SEED_OFFSET))
        return OutputHistory.fit(train)
    return OutputHistory.fit(trace)


def run_once(trace: Sequence[Request], cfg: RunConfig, history: Optional[OutputHistory] = None,
             synthetic: Optional[SyntheticSpec] = None):
    if cfg.router == "brh" and cfg.predictor != "oracle" and history is None:
        history = fit_history(trace, synthetic)
    return run_trace(trace, cfg.to_sim(), history)


def run_sweep(spec: SweepSpec, progress: Optional[Callable[[SweepCell], None]] = None) -> SweepReport:
    report = SweepReport()
    for params in spec.cells():
        cell = SweepCell(params)
        try:
            cfg = spec.base.updated(**params)
            trace, syn = cell_workload(spec, cfg)
            cell.requests = len(trace)
            if syn is not None:
                cell.rate_per_worker = syn.rate / cfg.G
            cell.summary, _ = run_once(trace, cfg, spec.history, syn)
        except Exception as e:  # reported per cell, the sweep keeps going
            cell.error = f"{type(e).__name__}: {e}"
            log.warning("sweep cell %s failed: %s", params, cell.error)
        report.cells.append(cell)
        if progress is not None:
            progress(cell)
    return report


# beta/gamma cross around the default (48, 0.9); 7 distinct cells
SENSITIVITY_CROSS = {"beta": [1.0, 24.0, 48.0, 96.0], "gamma": [0.5, 0.7, 0.9, 1.0]}
