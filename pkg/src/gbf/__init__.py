"""Gray-box falsification of closed-loop systems with neural-network controllers."""

from gbf.signals import (
    BoxSet,
    PiecewiseLinearSignal,
    TimeGrid,
    Trajectory,
    eval_signal,
    in_box,
    saturate_signal,
)
from gbf.stl import RobustnessCertificate, cost_from_certificate, parse_formula, robustness
from gbf.networks import FnnSpec, Layer, RnnSpec, fnn_eval, load_network, save_network
from gbf.model import ClosedLoopModel, SimOutput, SimulationError, rhs, simulate
from gbf.benchmarks import builtin_model, available_models
from gbf.linearize import LinearizationSchedule, build_schedule, interp, linearize_at
from gbf.adjoint import LocalSearchOptions, local_search
from gbf.result import FalsificationResult
from gbf.search import SearchConfig, run_experiment, run_search

__all__ = [
    "BoxSet",
    "ClosedLoopModel",
    "FalsificationResult",
    "FnnSpec",
    "Layer",
    "LinearizationSchedule",
    "LocalSearchOptions",
    "PiecewiseLinearSignal",
    "RnnSpec",
    "RobustnessCertificate",
    "SearchConfig",
    "SimOutput",
    "SimulationError",
    "TimeGrid",
    "Trajectory",
    "available_models",
    "build_schedule",
    "builtin_model",
    "cost_from_certificate",
    "eval_signal",
    "fnn_eval",
    "in_box",
    "interp",
    "linearize_at",
    "load_network",
    "local_search",
    "parse_formula",
    "rhs",
    "robustness",
    "run_experiment",
    "run_search",
    "saturate_signal",
    "save_network",
    "simulate",
]
