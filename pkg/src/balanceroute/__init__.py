"""Decode-tier request routing for LLM serving, with a trace-driven simulator."""

from .model import ActiveEntry, CapacityError, ClusterState, Request, WorkerState
from .predictor import OutputHistory, Predictor, PredictorConfig, PredictorKind
from .routers import Router, RouterKind, RouterParams
from .scoring import ScoreParams
from .simulator import RunSummary, SimConfig, StepRecord, run_trace

__version__ = "0.1.0"

__all__ = [
    "ActiveEntry", "CapacityError", "ClusterState", "OutputHistory", "Predictor", "PredictorConfig",
    "PredictorKind", "Request", "Router", "RouterKind", "RouterParams", "RunSummary", "ScoreParams",
    "SimConfig", "StepRecord", "WorkerState", "run_trace",
]
