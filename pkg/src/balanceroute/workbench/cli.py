"""Command-line entry point: run, sweep, gen-trace, convert-azure.

Settings resolve as defaults, then ``--config FILE`` (JSON), then explicit
flags. Every run and sweep prints its fully resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, Sequence

from ..predictor import OutputHistory
from ..routers import RouterKind
from ..simulator import SimulationIncomplete
from . import io as wio
from .config import RunConfig, load_json
from .sweep import SweepSpec, run_once, run_sweep
from .traces import (AZURE_OUTPUT_FILTER, DEFAULT_MS_PER_STEP, PROFILES, SyntheticSpec,
                     generate_synthetic, load_trace, profile_spec, write_native)

log = logging.getLogger("balanceroute")

# flag dest -> RunConfig field
RUN_FIELDS = {
    "router": "router", "G": "G", "B": "B", "H": "H", "alpha": "alpha", "beta": "beta",
    "gamma": "gamma", "s_greedy": "s_greedy", "r_max": "r_max", "predictor": "predictor",
    "delta_t": "delta_t", "seed": "seed", "step_time_a": "step_time_a",
    "step_time_b": "step_time_b", "max_steps": "max_steps", "p2c_metric": "p2c_metric",
    "gate_threshold": "gate_threshold",
}
WORKLOAD_DEFAULTS: dict[str, Any] = {
    "trace": None, "format": "native", "filter_output_gt": None, "ms_per_step": DEFAULT_MS_PER_STEP,
    "arrival_unit": "step", "history": None, "profile": None, "count": 1000, "rho": 1.0,
    "trace_seed": None, "key_pool": 0, "key_repeat": 0.0,
}
GEN_FIELDS = ("rate", "prompt_mean", "prompt_sigma", "output_dist", "output_mean", "output_sigma",
              "output_min", "output_scale", "output_cap")


def _opt_int(text: str) -> Optional[int]:
    return None if text.lower() == "none" else int(text)


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("routing and simulation")
    g.add_argument("--router", choices=[k.value for k in RouterKind])
    g.add_argument("--G", type=int, help="number of decode workers")
    g.add_argument("--B", type=int, help="per-worker concurrency limit")
    g.add_argument("--H", type=int, help="prediction horizon (BR-H)")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--s-greedy", dest="s_greedy", type=_opt_int, help="free-slot threshold, default G")
    g.add_argument("--r-max", dest="r_max", type=int)
    g.add_argument("--predictor", choices=["oracle", "survival", "exactmatch"])
    g.add_argument("--delta-t", dest="delta_t", type=_opt_int, help="refresh period, default H/2")
    g.add_argument("--gate-threshold", dest="gate_threshold", type=float)
    g.add_argument("--p2c-metric", dest="p2c_metric", choices=["load", "count"])
    g.add_argument("--seed", type=int)
    g.add_argument("--step-time-a", dest="step_time_a", type=float, help="ms per token")
    g.add_argument("--step-time-b", dest="step_time_b", type=float, help="fixed ms per step")
    g.add_argument("--max-steps", dest="max_steps", type=int)


def _add_workload_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("workload")
    g.add_argument("--trace", help="trace file")
    g.add_argument("--format", choices=["native", "azure"])
    g.add_argument("--filter-output-gt", dest="filter_output_gt", type=_opt_int,
                   help="keep only requests with more output tokens than this")
    g.add_argument("--ms-per-step", dest="ms_per_step", type=float)
    g.add_argument("--arrival-unit", dest="arrival_unit", choices=["step", "ms"])
    g.add_argument("--history", help="native trace whose outputs fit the survival/exactmatch predictor")
    g.add_argument("--profile", choices=PROFILES, help="synthetic workload when no --trace is given")
    g.add_argument("--count", type=int)
    g.add_argument("--rho", type=float, help="offered load relative to G*B slots")
    g.add_argument("--trace-seed", dest="trace_seed", type=int, help="synthetic seed, default --seed")
    g.add_argument("--key-pool", dest="key_pool", type=int)
    g.add_argument("--key-repeat", dest="key_repeat", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="balanceroute", description="Decode-tier routing workbench.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="simulate one configuration")
    run.add_argument("--config", help="JSON file with run and workload settings")
    run.add_argument("--out", help="output directory for summary.json and steps.csv")
    _add_sim_flags(run)
    _add_workload_flags(run)

    sw = sub.add_parser("sweep", help="run a cross or grid sweep")
    sw.add_argument("--config", help="JSON file; may hold 'axes' and 'mode' besides run settings")
    sw.add_argument("--out", help="output directory for sweep.csv and sweep.json")
    sw.add_argument("--axis", action="append", default=[], metavar="NAME=V1,V2,...")
    sw.add_argument("--mode", choices=["cross", "grid"])
    _add_sim_flags(sw)
    _add_workload_flags(sw)

    gen = sub.add_parser("gen-trace", help="write a synthetic native trace")
    gen.add_argument("--out", required=True)
    gen.add_argument("--profile", choices=PROFILES)
    gen.add_argument("--count", type=int, default=1000)
    gen.add_argument("--rho", type=float, default=1.0)
    gen.add_argument("--G", type=int, default=8)
    gen.add_argument("--B", type=int, default=32)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--key-pool", dest="key_pool", type=int, default=0)
    gen.add_argument("--key-repeat", dest="key_repeat", type=float, default=0.0)
    gen.add_argument("--rate", type=float, help="arrivals per step (overrides the profile rate)")
    gen.add_argument("--prompt-mean", dest="prompt_mean", type=float)
    gen.add_argument("--prompt-sigma", dest="prompt_sigma", type=float)
    gen.add_argument("--output-dist", dest="output_dist", choices=["lognormal", "capped"])
    gen.add_argument("--output-mean", dest="output_mean", type=float)
    gen.add_argument("--output-sigma", dest="output_sigma", type=float)
    gen.add_argument("--output-min", dest="output_min", type=int)
    gen.add_argument("--output-scale", dest="output_scale", type=float)
    gen.add_argument("--output-cap", dest="output_cap", type=_opt_int)

    conv = sub.add_parser("convert-azure", help="convert an Azure conversation CSV to a native trace")
    conv.add_argument("--trace", required=True)
    conv.add_argument("--out", required=True)
    conv.add_argument("--filter-output-gt", dest="filter_output_gt", type=_opt_int,
                      default=AZURE_OUTPUT_FILTER, help="'none' keeps every row")
    conv.add_argument("--ms-per-step", dest="ms_per_step", type=float, default=DEFAULT_MS_PER_STEP)
    return ap


def resolve(args: argparse.Namespace, file_cfg: dict[str, Any]) -> tuple[RunConfig, dict[str, Any]]:
    """Merge defaults, config file and explicit flags."""
    file_cfg = dict(file_cfg)
    run_part = {k: file_cfg.pop(k) for k in list(file_cfg) if k in RunConfig.__dataclass_fields__}
    workload = dict(WORKLOAD_DEFAULTS)
    for k in list(file_cfg):
        if k in workload:
            workload[k] = file_cfg.pop(k)
    if file_cfg:
        raise ValueError(f"unknown config keys: {', '.join(sorted(file_cfg))}")
    for dest, name in RUN_FIELDS.items():
        v = getattr(args, dest, None)
        if v is not None:
            run_part[name] = v
    for k in WORKLOAD_DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            workload[k] = v
    cfg = RunConfig().updated(**run_part)
    if workload["trace"] is None and workload["profile"] is None:
        raise ValueError("give --trace FILE or a synthetic --profile")
    if workload["trace"] is not None and workload["profile"] is not None:
        raise ValueError("--trace and --profile are mutually exclusive")
    if workload["profile"] is not None and workload["trace_seed"] is None:
        workload["trace_seed"] = cfg.seed
    return cfg, workload


def _load(wl: dict[str, Any]):
    return load_trace(wl["trace"], wl["format"], filter_output_gt=wl["filter_output_gt"],
                      ms_per_step=wl["ms_per_step"], arrival_unit=wl["arrival_unit"])


def _synthetic(cfg: RunConfig, wl: dict[str, Any]) -> SyntheticSpec:
    return profile_spec(wl["profile"], wl["count"], cfg.G, cfg.B, wl["rho"], wl["trace_seed"],
                        wl["key_pool"], wl["key_repeat"])


def _history(wl: dict[str, Any]) -> Optional[OutputHistory]:
    if wl["history"] is None:
        return None
    return OutputHistory.fit(load_trace(wl["history"], "native"))


def _echo(doc: dict[str, Any]) -> None:
    print(json.dumps(doc, sort_keys=True, indent=2))


def cmd_run(args: argparse.Namespace) -> int:
    file_cfg = load_json(args.config) if args.config else {}
    cfg, wl = resolve(args, file_cfg)
    resolved = {"run": cfg.as_dict(), "workload": wl}
    _echo({"resolved_config": resolved})
    if wl["trace"] is not None:
        trace, syn = _load(wl), None
    else:
        syn = _synthetic(cfg, wl)
        trace = generate_synthetic(syn)
    summary, records = run_once(trace, cfg, _history(wl), syn)
    _echo({"summary": summary.as_dict()})
    if args.out:
        out = Path(args.out)
        wio.write_summary(summary, out / "summary.json", resolved)
        wio.write_records(records, cfg.G, out / "steps.csv")
    return 0


def _parse_value(text: str) -> Any:
    if text.lower() == "none":
        return None
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_axes(specs: Sequence[str]) -> dict[str, list]:
    axes: dict[str, list] = {}
    for s in specs:
        name, sep, values = s.partition("=")
        if not sep or not name or not values:
            raise ValueError(f"bad --axis {s!r}, expected NAME=V1,V2,...")
        axes[name.strip().replace("-", "_")] = [_parse_value(v.strip()) for v in values.split(",")]
    return axes


def cmd_sweep(args: argparse.Namespace) -> int:
    file_cfg = load_json(args.config) if args.config else {}
    axes = dict(file_cfg.pop("axes", {}) or {})
    mode = file_cfg.pop("mode", "cross")
    axes.update(parse_axes(args.axis))
    if args.mode:
        mode = args.mode
    cfg, wl = resolve(args, file_cfg)
    resolved = {"run": cfg.as_dict(), "workload": wl, "axes": axes, "mode": mode}
    _echo({"resolved_config": resolved})
    if wl["trace"] is not None:
        spec = SweepSpec(cfg, axes, mode, trace=_load(wl), history=_history(wl))
    else:
        spec = SweepSpec(cfg, axes, mode, synthetic=_synthetic(cfg, wl), history=_history(wl))
    report = run_sweep(spec, progress=lambda c: log.info("cell %s: %s", c.params, c.error or "ok"))
    rows = report.rows()
    _echo({"cells": rows})
    if args.out:
        out = Path(args.out)
        wio.write_table(rows, out / "sweep.csv")
        wio.write_json({"config": resolved, "cells": rows}, out / "sweep.json")
    for c in report.failures:
        print(f"cell {c.params} failed: {c.error}", file=sys.stderr)
    return 1 if report.failures else 0


def cmd_gen_trace(args: argparse.Namespace) -> int:
    overrides = {k: getattr(args, k) for k in GEN_FIELDS if getattr(args, k) is not None}
    if args.profile is not None:
        spec = profile_spec(args.profile, args.count, args.G, args.B, args.rho, args.seed,
                            args.key_pool, args.key_repeat)
        spec = replace(spec, **overrides)
    else:
        if "rate" not in overrides:
            raise ValueError("without --profile, --rate is required")
        spec = SyntheticSpec(count=args.count, seed=args.seed, key_pool=args.key_pool,
                             key_repeat=args.key_repeat, **overrides)
    reqs = generate_synthetic(spec)
    write_native(reqs, args.out)
    _echo({"spec": spec.__dict__, "requests": len(reqs), "out": args.out})
    return 0


def cmd_convert_azure(args: argparse.Namespace) -> int:
    reqs = load_trace(args.trace, "azure", filter_output_gt=args.filter_output_gt, ms_per_step=args.ms_per_step)
    write_native(reqs, args.out)
    _echo({"requests": len(reqs), "out": args.out, "filter_output_gt": args.filter_output_gt,
           "ms_per_step": args.ms_per_step})
    return 0


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "gen-trace": cmd_gen_trace,
            "convert-azure": cmd_convert_azure}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except SimulationIncomplete as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
