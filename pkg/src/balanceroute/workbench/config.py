"""Flat run configuration <-> nested simulation config objects."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional

from ..predictor import PredictorConfig
from ..routers import RouterParams
from ..scoring import ScoreParams
from ..simulator import SimConfig


@dataclass
class RunConfig:
    """Everything a single run needs, as flat JSON-friendly fields."""

    router: str = "br0"
    G: int = 8
    B: int = 32
    H: int = 80
    alpha: float = 1.0
    beta: float = 48.0
    gamma: float = 0.9
    s_greedy: Optional[int] = None
    r_max: int = 4
    predictor: str = "oracle"
    delta_t: Optional[int] = None
    gate_threshold: float = 0.5
    p2c_metric: str = "load"
    seed: int = 0
    step_time_a: float = 0.01
    step_time_b: float = 50.0
    max_steps: int = 10_000_000

    def to_sim(self) -> SimConfig:
        score = ScoreParams(self.alpha, self.beta, self.gamma, self.H)
        pred = PredictorConfig(self.predictor, max(1, self.H), self.delta_t, self.gate_threshold)
        router = RouterParams(kind=self.router, s_greedy=self.s_greedy, r_max=self.r_max, score=score,
                              predictor=pred, rng_seed=self.seed, p2c_metric=self.p2c_metric)
        return SimConfig(self.G, self.B, router, self.step_time_a, self.step_time_b, self.max_steps,
                         self.seed)

    def as_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown run config keys: {', '.join(unknown)}")
        return cls(**d)

    def updated(self, **changes: Any) -> "RunConfig":
        d = self.as_dict()
        d.update(changes)
        cfg = RunConfig.from_dict(d)
        cfg.to_sim()  # validate eagerly
        return cfg


def load_json(path: str | Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a JSON object")
    return data
