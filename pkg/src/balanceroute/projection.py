"""Horizon-projected per-worker loads, envelope and margin vectors.

Offset 0 is the exact instantaneous load. At offset ``h >= 1`` an active
request with prefill ``s``, age ``a`` and predicted contribution ``c`` adds
``s + a + h - 1`` tokens while ``h <= c`` and nothing afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# (prefill, age, c_hat) for one active request
Entry = tuple[int, int, float]
Snapshot = Sequence[Sequence[Entry]]


@dataclass
class HorizonProjection:
    loads: np.ndarray     # (G, H+1) int64
    envelope: np.ndarray  # (H+1,) int64
    margins: np.ndarray   # (G, H+1) int64, >= 0

    @property
    def G(self) -> int:
        return self.loads.shape[0]

    @property
    def H(self) -> int:
        return self.loads.shape[1] - 1

    @classmethod
    def from_loads(cls, loads) -> "HorizonProjection":
        loads = np.asarray(loads, dtype=np.int64)
        if loads.ndim != 2 or loads.shape[0] == 0:
            raise ValueError(f"loads must be a non-empty (G, H+1) array, got shape {loads.shape}")
        env = loads.max(axis=0)
        return cls(loads, env, env[None, :] - loads)

    def min_margin(self, g: int) -> int:
        return int(self.margins[g].min())

    def admit(self, g: int, delta_s: int) -> None:
        """In-place constant-delta admission to worker ``g``."""
        if delta_s < 0:
            raise ValueError(f"admitted load must be >= 0, got {delta_s}")
        if delta_s == 0:
            return
        row = self.loads[g]
        row += delta_s
        raised = row > self.envelope
        if raised.any():
            np.maximum(self.envelope, row, out=self.envelope)
            np.subtract(self.envelope[None, :], self.loads, out=self.margins)
        else:
            self.margins[g] -= delta_s

    def copy(self) -> "HorizonProjection":
        return HorizonProjection(self.loads.copy(), self.envelope.copy(), self.margins.copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HorizonProjection):
            return NotImplemented
        return (np.array_equal(self.loads, other.loads)
                and np.array_equal(self.envelope, other.envelope)
                and np.array_equal(self.margins, other.margins))


def project_naive(snapshot: Snapshot, H: int) -> HorizonProjection:
    """Reference projection: sum every request's per-offset contribution directly."""
    G = len(snapshot)
    loads = np.zeros((G, H + 1), dtype=np.int64)
    for g, entries in enumerate(snapshot):
        for s, a, c in entries:
            loads[g, 0] += s + a
            for h in range(1, H + 1):
                if h <= c:
                    loads[g, h] += s + a + h - 1
    return HorizonProjection.from_loads(loads)


def project_fast(snapshot: Snapshot, H: int) -> HorizonProjection:
    """Bucket requests by ``floor(c_hat)`` and take suffix sums per worker.

    ``loads[g][h] = sum_{c_i >= h} (s_i + a_i - 1) + h * #{i : c_i >= h}``.
    """
    G = len(snapshot)
    width = H + 1
    idx: list[int] = []
    base: list[int] = []
    now = np.zeros(G, dtype=np.int64)
    for g, entries in enumerate(snapshot):
        off = g * width
        tot = 0
        for s, a, c in entries:
            tot += s + a
            ci = math.floor(c)
            if ci > H:
                ci = H
            elif ci < 0:
                ci = 0
            idx.append(off + ci)
            base.append(s + a - 1)
        now[g] = tot
    return _project_arrays(np.asarray(idx, dtype=np.int64), np.asarray(base, dtype=np.int64),
                           now, G, H)


def _project_arrays(idx: np.ndarray, base: np.ndarray, now: np.ndarray, G: int, H: int) -> HorizonProjection:
    width = H + 1
    size = G * width
    # float64 bincount is exact for totals below 2**53 tokens
    sums = np.bincount(idx, weights=base, minlength=size).reshape(G, width)
    cnts = np.bincount(idx, minlength=size).reshape(G, width)
    suf_sum = np.cumsum(sums[:, ::-1], axis=1)[:, ::-1].astype(np.int64)
    suf_cnt = np.cumsum(cnts[:, ::-1], axis=1)[:, ::-1].astype(np.int64)
    loads = suf_sum + np.arange(width, dtype=np.int64)[None, :] * suf_cnt
    loads[:, 0] = now
    return HorizonProjection.from_loads(loads)


def apply_admission(proj: HorizonProjection, g: int, delta_s: int) -> HorizonProjection:
    out = proj.copy()
    out.admit(g, delta_s)
    return out
