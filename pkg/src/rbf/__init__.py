"""rbf: log-based data movement, freshness-gated model deployment, and a
virtual-time simulator for hybrid dedicated/opportunistic model pipelines."""

from .clock import VirtualClock, WallClock
from .continuum_sim import (
    DecayCurve,
    LinkModel,
    LinkThroughput,
    ScenarioConfig,
    SimTrace,
    evaluate_decay,
    expected_decay_period,
    indistinguishability_bound,
    run_scenario,
    staleness_series,
    transfer_time_ms,
)
from .data_mover import FileRepository, FileVersion
from .event_log import LogEntry, LogStore
from .model_lifecycle import DeployDecision, DeployedSlot, ModelArtifact, publish_model, pull_model
from .pipeline_engine import (
    BatchTierConfig,
    PipelineInstance,
    PublishEvent,
    StageDist,
    StageDurations,
    launch_instance,
    run_batch_loop,
    run_dedicated_loop,
)
from .remote import RemoteRepository, RepositoryServer

__version__ = "0.1.0"

__all__ = [
    "BatchTierConfig",
    "DecayCurve",
    "DeployDecision",
    "DeployedSlot",
    "FileRepository",
    "FileVersion",
    "LinkModel",
    "LinkThroughput",
    "LogEntry",
    "LogStore",
    "ModelArtifact",
    "PipelineInstance",
    "PublishEvent",
    "RemoteRepository",
    "RepositoryServer",
    "ScenarioConfig",
    "SimTrace",
    "StageDist",
    "StageDurations",
    "VirtualClock",
    "WallClock",
    "evaluate_decay",
    "expected_decay_period",
    "indistinguishability_bound",
    "launch_instance",
    "publish_model",
    "pull_model",
    "run_batch_loop",
    "run_dedicated_loop",
    "run_scenario",
    "staleness_series",
    "transfer_time_ms",
]
