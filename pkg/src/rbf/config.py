"""Scenario configuration files.

YAML key-value tree; every default in the library is overridable. Top
level keys:

  horizon_h, seed, sensor_interval_min, history_window_h,
  dedicated (mapping or false), batch_tiers (list), network,
  model_sizes, decay_curves, measurement_error_band,
  base_period_min, reference_extra_generations

See the README for a complete annotated example.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .continuum_sim import (
    DecayCurve,
    InvalidConfigError,
    LinkModel,
    LinkThroughput,
    ScenarioConfig,
    default_decay_curves,
)
from .pipeline_engine import BatchTierConfig, StageDist, StageDurations


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise InvalidConfigError(f"cannot parse {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise InvalidConfigError(f"{path}: top level must be a mapping")
    return scenario_from_dict(raw)


def scenario_from_dict(raw: dict) -> ScenarioConfig:
    try:
        config = _build(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidConfigError(f"invalid scenario config: {exc}") from exc
    config.validate()
    return config


def _build(raw: dict) -> ScenarioConfig:
    if "horizon_h" not in raw:
        raise InvalidConfigError("missing required key: horizon_h")
    config = ScenarioConfig(horizon_h=float(raw["horizon_h"]))

    for key in ("seed", "reference_extra_generations"):
        if key in raw:
            setattr(config, key, int(raw[key]))
    for key in ("sensor_interval_min", "history_window_h", "base_period_min"):
        if key in raw:
            setattr(config, key, float(raw[key]))

    if "dedicated" in raw:
        config.dedicated = _stage_durations(raw["dedicated"])
    if "batch_tiers" in raw:
        config.batch_tiers = [_batch_tier(t, i) for i, t in enumerate(raw["batch_tiers"] or [])]
    if "network" in raw:
        config.link = _link_model(raw["network"])
    if "model_sizes" in raw:
        config.model_sizes.update({k: int(v) for k, v in raw["model_sizes"].items()})
    if "decay_curves" in raw:
        curves = default_decay_curves()
        curves.update({k: _decay_curve(v) for k, v in raw["decay_curves"].items()})
        config.decay_curves = curves
    if "measurement_error_band" in raw:
        lo, hi = raw["measurement_error_band"]
        config.measurement_error_band = (float(lo), float(hi))
    return config


def _stage_dist(raw) -> StageDist:
    if isinstance(raw, (int, float)):
        return StageDist(float(raw))
    return StageDist(float(raw["mean_min"]), float(raw.get("std_min", 0.0)))


def _stage_durations(raw) -> StageDurations | None:
    if raw is False or raw is None:
        return None
    if raw is True:
        return StageDurations.calibrated()
    mode = raw.get("mode", "calibrated")
    if mode == "deterministic":
        base = StageDurations.deterministic()
    elif mode == "calibrated":
        base = StageDurations.calibrated()
    else:
        raise InvalidConfigError(f"unknown dedicated mode {mode!r}")

    kwargs = {}
    for stage in ("cfd", "transform", "overhead"):
        if stage in raw:
            kwargs[stage] = _stage_dist(raw[stage])
    if "train" in raw:
        train = dict(base.train)
        train.update({m: _stage_dist(v) for m, v in raw["train"].items()})
        kwargs["train"] = train
    for key in (
        "sim_task_scale",
        "sim_task_std_min",
        "history_train_multiplier",
        "train_spread_std",
    ):
        if key in raw:
            kwargs[key] = float(raw[key])
    if "n_sim_tasks" in raw:
        kwargs["n_sim_tasks"] = int(raw["n_sim_tasks"])

    from dataclasses import replace

    return replace(base, **kwargs)


def _batch_tier(raw: dict, index: int) -> BatchTierConfig:
    kwargs = {"name": str(raw.get("name", f"batch-{index}"))}
    for key in (
        "queue_wait_min_h",
        "queue_wait_max_h",
        "allocation_limit_h",
        "admission_margin_stds",
    ):
        if key in raw:
            kwargs[key] = float(raw[key])
    if "iteration" in raw:
        kwargs["iteration"] = _stage_dist(raw["iteration"])
    if "model_types" in raw:
        kwargs["model_types"] = tuple(raw["model_types"])
    return BatchTierConfig(**kwargs)


def _link_model(raw: dict) -> LinkModel:
    base = LinkModel()
    throughput = dict(base.throughput)
    for model_type, spec in (raw.get("throughput") or {}).items():
        throughput[model_type] = LinkThroughput(
            isolated_mibps=float(spec["isolated_mibps"]),
            degradation_no_slicing=float(spec.get("degradation_no_slicing", 0.0)),
            degradation_slicing=float(spec.get("degradation_slicing", 0.0)),
        )
    return LinkModel(
        throughput=throughput,
        slicing=bool(raw.get("slicing", base.slicing)),
        contention_active=bool(raw.get("contention_active", base.contention_active)),
    )


def _decay_curve(raw: dict) -> DecayCurve:
    kind = raw.get("kind", "piecewise")
    if kind == "linear":
        return DecayCurve(
            kind="linear",
            slope=float(raw["slope"]),
            intercept=float(raw["intercept"]),
            history_window_h=float(raw.get("history_window_h", 6.0)),
        )
    return DecayCurve(
        kind="piecewise",
        knots=tuple((float(a), float(m)) for a, m in raw["knots"]),
        history_window_h=float(raw.get("history_window_h", 6.0)),
    )
