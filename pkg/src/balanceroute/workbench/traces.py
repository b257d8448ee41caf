"""Trace ingestion, synthetic generation and the two workload profiles.

Native traces are JSON Lines, one request per line::

    {"id": 0, "arrival": 12, "prompt_tokens": 4100, "output_tokens": 1033, "prompt_key": "k17"}

``arrival`` is a step index, or an epoch-millisecond timestamp when loaded
with ``arrival_unit="ms"``.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ..model import Request

DEFAULT_MS_PER_STEP = 60.0
AZURE_OUTPUT_FILTER = 1000
NATIVE_FIELDS = ("id", "arrival", "prompt_tokens", "output_tokens")


class TraceError(ValueError):
    """Malformed trace input; the message names the offending line."""


def _bin(times_ms: list[float], ms_per_step: float) -> list[int]:
    if ms_per_step <= 0:
        raise ValueError(f"ms_per_step must be > 0, got {ms_per_step}")
    if not times_ms:
        return []
    t0 = min(times_ms)
    return [int((t - t0) // ms_per_step) for t in times_ms]


def _positive_int(value, name: str, where: str) -> int:
    if isinstance(value, bool):
        raise TraceError(f"{where}: {name} must be an integer, got {value!r}")
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise TraceError(f"{where}: {name} must be an integer, got {value!r}") from None
    if v != float(value):
        raise TraceError(f"{where}: {name} must be an integer, got {value!r}")
    if v < 1:
        raise TraceError(f"{where}: {name} must be >= 1, got {v}")
    return v


def _sorted(requests: list[Request]) -> list[Request]:
    return sorted(requests, key=lambda r: (r.arrival_step, r.id))


def load_native(path: str | Path, arrival_unit: str = "step",
                ms_per_step: float = DEFAULT_MS_PER_STEP) -> list[Request]:
    if arrival_unit not in ("step", "ms"):
        raise ValueError(f"arrival_unit must be 'step' or 'ms', got {arrival_unit!r}")
    rows = []
    seen: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise TraceError(f"{where}: invalid JSON ({e.msg})") from None
            if not isinstance(rec, dict):
                raise TraceError(f"{where}: expected a JSON object")
            missing = [f for f in NATIVE_FIELDS if f not in rec]
            if missing:
                raise TraceError(f"{where}: missing field(s) {', '.join(missing)}")
            rid = rec["id"]
            if isinstance(rid, bool) or not isinstance(rid, int):
                raise TraceError(f"{where}: id must be an integer, got {rid!r}")
            if rid in seen:
                raise TraceError(f"{where}: duplicate id {rid}")
            seen.add(rid)
            arrival = rec["arrival"]
            if isinstance(arrival, bool) or not isinstance(arrival, (int, float)) or arrival < 0:
                raise TraceError(f"{where}: arrival must be a non-negative number, got {arrival!r}")
            if arrival_unit == "step" and arrival != int(arrival):
                raise TraceError(f"{where}: step arrivals must be integers, got {arrival!r}")
            s = _positive_int(rec["prompt_tokens"], "prompt_tokens", where)
            o = _positive_int(rec["output_tokens"], "output_tokens", where)
            key = rec.get("prompt_key")
            if key is not None and not isinstance(key, str):
                raise TraceError(f"{where}: prompt_key must be a string or null")
            rows.append((rid, arrival, s, o, key))
    if arrival_unit == "ms":
        steps = _bin([float(r[1]) for r in rows], ms_per_step)
    else:
        steps = [int(r[1]) for r in rows]
    return _sorted([Request(r[0], k, r[2], r[3], r[4]) for r, k in zip(rows, steps)])


_FRACTION = re.compile(r"(\.\d{6})\d+")


def _parse_timestamp_ms(text: str) -> float:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    # fromisoformat on 3.10 accepts at most 6 fractional digits and no trailing Z
    norm = _FRACTION.sub(r"\1", text).replace("Z", "+00:00")
    dt = datetime.fromisoformat(norm)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp() * 1000.0


def load_azure(path: str | Path, filter_output_gt: Optional[int] = None,
               ms_per_step: float = DEFAULT_MS_PER_STEP) -> list[Request]:
    """Read a TIMESTAMP, ContextTokens, GeneratedTokens CSV.

    Ids follow row order. With ``filter_output_gt`` set, rows whose output is
    not above the threshold are dropped (ids still follow the original rows).
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"TIMESTAMP", "ContextTokens", "GeneratedTokens"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise TraceError(f"{path}:1: header must contain {', '.join(sorted(need))}")
        for idx, rec in enumerate(reader):
            where = f"{path}:{reader.line_num}"
            try:
                t = _parse_timestamp_ms(rec["TIMESTAMP"] or "")
            except ValueError:
                raise TraceError(f"{where}: unparseable TIMESTAMP {rec['TIMESTAMP']!r}") from None
            s = _positive_int(rec["ContextTokens"], "ContextTokens", where)
            o = _positive_int(rec["GeneratedTokens"], "GeneratedTokens", where)
            if filter_output_gt is not None and o <= filter_output_gt:
                continue
            rows.append((idx, t, s, o))
    steps = _bin([r[1] for r in rows], ms_per_step)
    return _sorted([Request(r[0], k, r[2], r[3]) for r, k in zip(rows, steps)])


def load_trace(path: str | Path, fmt: str = "native", *, filter_output_gt: Optional[int] = None,
               ms_per_step: float = DEFAULT_MS_PER_STEP, arrival_unit: str = "step") -> list[Request]:
    if fmt == "native":
        reqs = load_native(path, arrival_unit, ms_per_step)
        if filter_output_gt is not None:
            reqs = [r for r in reqs if r.output_len > filter_output_gt]
        return reqs
    if fmt == "azure":
        return load_azure(path, filter_output_gt, ms_per_step)
    raise ValueError(f"unknown trace format {fmt!r} (expected 'native' or 'azure')")


def write_native(requests: Iterable[Request], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in requests:
            fh.write(json.dumps({"id": r.id, "arrival": r.arrival_step, "prompt_tokens": r.prefill_len,
                                 "output_tokens": r.output_len, "prompt_key": r.prompt_key},
                                sort_keys=True) + "\n")


# --- synthetic generation ---------------------------------------------------

def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


@dataclass(frozen=True)
class SyntheticSpec:
    """Poisson arrivals with lognormal prompts and either lognormal or capped outputs.

    ``output_dist="lognormal"`` draws outputs with the given mean and log-sd,
    optionally clipped at ``output_cap``. ``output_dist="capped"`` draws
    ``output_min + Exp(output_scale)`` clipped at ``output_cap``.
    """

    count: int
    rate: float  # mean arrivals per step
    prompt_mean: float = 3000.0
    prompt_sigma: float = 1.0
    output_dist: str = "lognormal"
    output_mean: float = 1000.0
    output_sigma: float = 1.0
    output_min: int = 1
    output_scale: float = 50.0
    output_cap: Optional[int] = None
    key_pool: int = 0
    key_repeat: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValueError(f"count must be >= 0, got {self.count}")
        if self.rate < 0:
            raise ValueError(f"arrival rate must be >= 0, got {self.rate}")
        if self.prompt_mean < 1 or self.prompt_sigma < 0:
            raise ValueError("prompt distribution needs mean >= 1 and sigma >= 0")
        if self.output_dist not in ("lognormal", "capped"):
            raise ValueError(f"output_dist must be 'lognormal' or 'capped', got {self.output_dist!r}")
        if self.output_dist == "lognormal" and (self.output_mean < 1 or self.output_sigma < 0):
            raise ValueError("lognormal outputs need mean >= 1 and sigma >= 0")
        if self.output_dist == "capped":
            if self.output_min < 1 or self.output_scale < 0 or self.output_cap is None:
                raise ValueError("capped outputs need output_min >= 1, scale >= 0 and a cap")
        if self.output_cap is not None and self.output_cap < max(1, self.output_min):
            raise ValueError(f"output_cap {self.output_cap} is below the minimum output")
        if not 0.0 <= self.key_repeat <= 1.0:
            raise ValueError(f"key_repeat must lie in [0, 1], got {self.key_repeat}")
        if self.key_repeat > 0 and self.key_pool < 1:
            raise ValueError("key_repeat > 0 needs a non-empty key pool")

    def expected_output_mean(self) -> float:
        """Mean of the (continuous, pre-rounding) output distribution."""
        cap = self.output_cap
        if self.output_dist == "capped":
            m, sc = self.output_min, self.output_scale
            if sc == 0:
                return float(min(m, cap))
            return m + sc * (1.0 - math.exp(-(cap - m) / sc))
        sig = self.output_sigma
        mu = math.log(self.output_mean) - sig * sig / 2
        if cap is None:
            return self.output_mean
        if sig == 0:
            return min(self.output_mean, cap)
        lc = math.log(cap)
        return (self.output_mean * _norm_cdf((lc - mu - sig * sig) / sig)
                + cap * (1.0 - _norm_cdf((lc - mu) / sig)))


def _lognormal(rng: np.random.Generator, mean: float, sigma: float, n: int) -> np.ndarray:
    return rng.lognormal(math.log(mean) - sigma * sigma / 2, sigma, n)


def _outputs(spec: SyntheticSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    if spec.output_dist == "capped":
        x = spec.output_min + rng.exponential(spec.output_scale, n) if spec.output_scale > 0 \
            else np.full(n, float(spec.output_min))
    else:
        x = _lognormal(rng, spec.output_mean, spec.output_sigma, n)
    if spec.output_cap is not None:
        x = np.minimum(x, spec.output_cap)
    return np.maximum(1, np.rint(x)).astype(np.int64)


def generate_synthetic(spec: SyntheticSpec) -> list[Request]:
    """Deterministic trace for ``spec``.

    A request repeats a pooled prompt key with probability ``key_repeat``;
    every pooled key carries one output length, so repeats are exact
    recurrences. Other requests get a unique key.
    """
    n = spec.count
    rng = np.random.default_rng(spec.seed)
    if spec.rate > 0:
        arrivals = np.floor(np.cumsum(rng.exponential(1.0 / spec.rate, n))).astype(np.int64)
    else:
        arrivals = np.zeros(n, dtype=np.int64)
    prompts = np.maximum(1, np.rint(_lognormal(rng, spec.prompt_mean, spec.prompt_sigma, n))).astype(np.int64)
    outputs = _outputs(spec, rng, n)
    keys: list[Optional[str]] = [None] * n
    if spec.key_pool > 0:
        pool_out = _outputs(spec, rng, spec.key_pool)
        repeat = rng.random(n) < spec.key_repeat
        pick = rng.integers(0, spec.key_pool, n)
        for i in range(n):
            if repeat[i]:
                keys[i] = f"k{pick[i]}"
                outputs[i] = pool_out[pick[i]]
            else:
                keys[i] = f"u{i}"
    return [Request(i, int(arrivals[i]), int(prompts[i]), int(outputs[i]), keys[i]) for i in range(n)]


PROFILES = ("heavy", "azure")


def profile_spec(name: str, count: int, G: int = 8, B: int = 32, rho: float = 1.0, seed: int = 0,
                 key_pool: int = 0, key_repeat: float = 0.0) -> SyntheticSpec:
    """Preset workloads with the arrival rate set for offered load ``rho``.

    ``rho`` is the ratio of mean concurrent demand (rate times mean output) to
    the fleet's ``G * B`` decode slots.

    * ``heavy``: lognormal outputs (mean 1185, log-sd 1, capped at 8192) and
      lognormal prompts (mean 3197).
    * ``azure``: outputs ``1001 + Exp(51)`` capped at 1400, the shape left by
      keeping only outputs above 1000 tokens; prompts lognormal with mean 4652.
    """
    if rho <= 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    if name == "heavy":
        base = SyntheticSpec(count=count, rate=1.0, prompt_mean=3197, prompt_sigma=1.0,
                             output_dist="lognormal", output_mean=1185, output_sigma=1.0,
                             output_cap=8192, key_pool=key_pool, key_repeat=key_repeat, seed=seed)
    elif name == "azure":
        base = SyntheticSpec(count=count, rate=1.0, prompt_mean=4652, prompt_sigma=1.0,
                             output_dist="capped", output_min=1001, output_scale=51, output_cap=1400,
                             key_pool=key_pool, key_repeat=key_repeat, seed=seed)
    else:
        raise ValueError(f"unknown profile {name!r} (expected one of {', '.join(PROFILES)})")
    rate = rho * G * B / base.expected_output_mean()
    return SyntheticSpec(**{**base.__dict__, "rate": rate})
