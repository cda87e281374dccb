"""Deterministic simulator and capacity planner for brokered streaming-AI pipelines."""

from .analytic import (
    amdahl_speedup,
    estimate_demand,
    min_mitigation,
    predict_stability,
)
from .runner import RunResult, run_scenario
from .scenario import (
    BatchingParams,
    ComputeProfile,
    FanoutModel,
    ScenarioSpec,
    SizeModel,
    builtin_scenario,
    dump_scenario,
    load_scenario,
    scaled,
)

__version__ = "0.1.0"

__all__ = [
    "amdahl_speedup",
    "estimate_demand",
    "predict_stability",
    "min_mitigation",
    "run_scenario",
    "RunResult",
    "ScenarioSpec",
    "ComputeProfile",
    "FanoutModel",
    "SizeModel",
    "BatchingParams",
    "builtin_scenario",
    "load_scenario",
    "dump_scenario",
    "scaled",
]
