"""Trace I/O, synthetic workloads, sweeps and the command line."""

from .config import RunConfig
from .io import records_csv, write_records, write_summary
from .sweep import SENSITIVITY_CROSS, SweepReport, SweepSpec, run_once, run_sweep
from .traces import (PROFILES, SyntheticSpec, TraceError, generate_synthetic, load_trace, profile_spec,
                     write_native)

__all__ = [
    "PROFILES", "RunConfig", "SENSITIVITY_CROSS", "SweepReport", "SweepSpec", "SyntheticSpec",
    "TraceError", "generate_synthetic", "load_trace", "profile_spec", "records_csv", "run_once",
    "run_sweep", "write_native", "write_records", "write_summary",
]
