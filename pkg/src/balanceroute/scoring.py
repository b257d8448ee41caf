"""F-scores: marginal imbalance reduction of admitting load to one worker.

The single-step score has one kink at the safe margin. The horizon score sums
discounted per-offset effects against a margin vector and reduces to the
single-step score when ``H = 0`` and ``(alpha, beta) = (1, G)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 48.0
DEFAULT_GAMMA = 0.9


@dataclass(frozen=True)
class ScoreParams:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    gamma: float = DEFAULT_GAMMA
    horizon: int = 80

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError(f"alpha and beta must be > 0, got ({self.alpha}, {self.beta})")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")


def discount_vector(H: int, gamma: float) -> np.ndarray:
    """Return ``(1, gamma, ..., gamma**H)`` built by repeated multiplication."""
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    if H < 0:
        raise ValueError(f"horizon must be >= 0, got {H}")
    d = np.empty(H + 1, dtype=np.float64)
    d[0] = 1.0
    for h in range(1, H + 1):
        d[h] = d[h - 1] * gamma
    return d


def safe_margin_step(load_g: int, max_load: int) -> int:
    return max_load - load_g


def fscore_step(delta_s: float, m_g: float, G: int) -> float:
    """Single-step score ``delta - G * (delta - m)_+``."""
    over = delta_s - m_g
    if over > 0:
        return float(delta_s - G * over)
    return float(delta_s)


def fscore_horizon_many(deltas: np.ndarray, margins: np.ndarray, d: np.ndarray,
                        alpha: float, beta: float) -> np.ndarray:
    """Vectorized horizon score for an array of candidate load increments.

    Every entry is computed with the same per-row reduction, so the value for a
    given ``delta`` does not depend on which other deltas share the call.
    """
    margins = np.asarray(margins, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if margins.shape != d.shape:
        raise ValueError(f"margin vector length {margins.shape} != discount length {d.shape}")
    deltas = np.asarray(deltas, dtype=np.float64).reshape(-1, 1)
    over = np.maximum(deltas - margins[None, :], 0.0)
    penalty = (over * d[None, :]).sum(axis=1)
    return alpha * float(d.sum()) * deltas[:, 0] - beta * penalty


def fscore_horizon(delta_s: float, margins, d, params: ScoreParams) -> float:
    """Horizon score ``alpha * (1.d) * delta - beta * (delta*1 - m)_+ . d``."""
    return float(fscore_horizon_many(np.array([delta_s]), margins, d, params.alpha, params.beta)[0])


class HorizonScorer:
    """Scores candidate increments for one worker against fixed margins.

    Caches results per increment so repeated subset evaluations stay cheap.
    """

    def __init__(self, margins, d: np.ndarray, alpha: float, beta: float):
        self.margins = np.asarray(margins, dtype=np.float64)
        self.d = d
        self.alpha = alpha
        self.beta = beta
        self._cache: dict[int, float] = {}

    def __call__(self, delta_s: int) -> float:
        v = self._cache.get(delta_s)
        if v is None:
            v = float(fscore_horizon_many(np.array([delta_s]), self.margins, self.d,
                                          self.alpha, self.beta)[0])
            self._cache[delta_s] = v
        return v

    def many(self, deltas) -> np.ndarray:
        return fscore_horizon_many(np.asarray(deltas), self.margins, self.d, self.alpha, self.beta)


class StepScorer:
    """Single-step score closed over one worker's margin."""

    def __init__(self, m_g: int, G: int):
        self.m_g = m_g
        self.G = G

    def __call__(self, delta_s: int) -> float:
        return fscore_step(delta_s, self.m_g, self.G)

    def many(self, deltas) -> np.ndarray:
        return np.array([fscore_step(int(x), self.m_g, self.G) for x in deltas], dtype=np.float64)
