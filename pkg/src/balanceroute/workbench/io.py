"""Byte-stable result files: JSON summaries and CSV step/sweep tables."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Optional, Sequence

from ..simulator import RunSummary, StepRecord


def _write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror or e}") from e
    return path


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def summary_document(summary: RunSummary, config: Optional[dict] = None,
                     with_completions: bool = False) -> dict[str, Any]:
    doc: dict[str, Any] = {"summary": summary.as_dict(with_completions)}
    if config is not None:
        doc["config"] = config
    return doc


def write_summary(summary: RunSummary, path: str | Path, config: Optional[dict] = None,
                  with_completions: bool = False) -> Path:
    return _write_text(path, dumps_json(summary_document(summary, config, with_completions)))


def records_header(G: int) -> list[str]:
    return ["k", *(f"load_{g}" for g in range(G)), "imbalance_total", "imbalance_spread", "step_time"]


def records_csv(records: Sequence[StepRecord], G: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(records_header(G))
    for r in records:
        if len(r.loads) != G:
            raise ValueError(f"step {r.k}: expected {G} loads, got {len(r.loads)}")
        w.writerow([r.k, *r.loads, r.imbalance_total, r.imbalance_spread, repr(float(r.step_time))])
    return buf.getvalue()


def write_records(records: Sequence[StepRecord], G: int, path: str | Path) -> Path:
    return _write_text(path, records_csv(records, G))


def table_csv(rows: Sequence[dict[str, Any]]) -> str:
    """One row per dict; columns are the sorted union of keys."""
    cols = sorted({c for row in rows for c in row})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow(["" if row.get(c) is None else row.get(c) for c in cols])
    return buf.getvalue()


def write_table(rows: Sequence[dict[str, Any]], path: str | Path) -> Path:
    return _write_text(path, table_csv(rows))


def write_json(obj: Any, path: str | Path) -> Path:
    return _write_text(path, dumps_json(obj))
