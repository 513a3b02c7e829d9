"""Virtual-time discrete-event simulator for the whole continuum.

Drives the dedicated pipeline loop and any number of opportunistic batch
tiers through the pipeline state machine, moves published models across
the (contended or sliced) link, gates edge deployment through the
freshness check, and samples deployed-model age on the sensor cadence.

Everything is integer milliseconds of virtual time. All randomness comes
from per-driver generators derived from the scenario seed, so equal
(config, seed) pairs produce byte-identical traces.
"""

from __future__ import annotations

import heapq
import json
import random
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum

from .clock import hours_to_ms, minutes_to_ms, ms_to_minutes
from .model_lifecycle import DeployedSlot, ModelArtifact
from .pipeline_engine import (
    MODEL_TYPES,
    BatchTierConfig,
    PipelineInstance,
    StageDurations,
    advance,
    launch_instance,
)

KIB = 1024
MIB = 1024 * 1024

# Artifact sizes on the wire: 290 KB PINN, 9.1 MB FNO, 1.1 MB PCR.
DEFAULT_MODEL_SIZES = {
    "pinn": 290 * KIB,
    "fno": round(9.1 * MIB),
    "pcr": round(1.1 * MIB),
}

DEFAULT_MEASUREMENT_ERROR_BAND = (0.44, 0.87)
DEFAULT_BASE_PERIOD_MIN = 134.8
DEFAULT_SENSOR_INTERVAL_MIN = 5.0
# Published upper bound on useful extra generations per maximal-cadence
# period; kept alongside the straight floor(period/interval) ratio, which
# comes out higher.
DEFAULT_REFERENCE_EXTRA_GENERATIONS = 20


class SimError(Exception):
    pass


class InvalidConfigError(SimError):
    pass


class UnconfiguredModelTypeError(SimError):
    pass


class NoDeploysError(SimError):
    pass


# --------------------------------------------------------------------------
# Network link model


@dataclass(frozen=True)
class LinkThroughput:
    """Throughput for one model's download flow, MiB/s.

    Degradations are fractions of the isolated rate lost under contention,
    without and with slicing respectively.
    """

    isolated_mibps: float
    degradation_no_slicing: float = 0.0
    degradation_slicing: float = 0.0

    def __post_init__(self):
        if self.isolated_mibps <= 0:
            raise ValueError("isolated throughput must be positive")
        for deg in (self.degradation_no_slicing, self.degradation_slicing):
            if not 0.0 <= deg < 1.0:
                raise ValueError("degradation must be in [0, 1)")


def _measured_link_defaults() -> dict[str, LinkThroughput]:
    # Calibrated from measured download rates (MiB/s): isolated vs under
    # contention, with and without slicing. Degradations are exact ratios
    # against the isolated rate; the slicing run where contention measured
    # faster than isolated is clamped to zero degradation.
    measured = {
        # model: (isolated, contended_no_slicing, contended_slicing)
        "pcr": (2.68, 2.15, 2.50),
        "pinn": (1.37, 1.06, 1.31),
        "fno": (4.92, 3.88, 4.62),
    }
    return {
        m: LinkThroughput(
            isolated_mibps=iso,
            degradation_no_slicing=max(0.0, 1.0 - cont_ns / iso),
            degradation_slicing=max(0.0, 1.0 - cont_s / iso),
        )
        for m, (iso, cont_ns, cont_s) in measured.items()
    }


@dataclass(frozen=True)
class LinkModel:
    throughput: dict[str, LinkThroughput] = field(default_factory=_measured_link_defaults)
    slicing: bool = False
    contention_active: bool = False

    def effective_mibps(self, model_type: str) -> float:
        try:
            link = self.throughput[model_type]
        except KeyError:
            raise UnconfiguredModelTypeError(
                f"no configured throughput for model type {model_type!r}"
            ) from None
        if not self.contention_active:
            return link.isolated_mibps
        deg = link.degradation_slicing if self.slicing else link.degradation_no_slicing
        return link.isolated_mibps * (1.0 - deg)


def transfer_time_ms(link: LinkModel, model_type: str, size_bytes: int) -> int:
    if size_bytes <= 0:
        raise ValueError("size_bytes must be positive")
    return round(size_bytes / (link.effective_mibps(model_type) * MIB) * 1000.0)


# --------------------------------------------------------------------------
# Accuracy decay curves


@dataclass(frozen=True)
class DecayCurve:
    """MAE (m/s) as a function of model age in minutes.

    Either linear (intercept + slope * age) or piecewise-linear through
    knots, clamped to the last knot beyond its range.
    """

    kind: str = "piecewise"
    knots: tuple[tuple[float, float], ...] = ()
    slope: float = 0.0
    intercept: float = 0.0
    history_window_h: float = 6.0

    def __post_init__(self):
        if self.kind not in ("linear", "piecewise"):
            raise ValueError(f"unknown decay curve kind {self.kind!r}")
        if self.kind == "piecewise":
            if not self.knots:
                raise ValueError("piecewise decay curve needs at least one knot")
            ages = [a for a, _ in self.knots]
            if ages != sorted(set(ages)):
                raise ValueError("knot ages must be strictly increasing")
            if any(mae < 0 for _, mae in self.knots):
                raise ValueError("MAE values must be non-negative")

    def mae_at(self, age_min: float) -> float:
        if age_min < 0:
            raise ValueError("age must be non-negative")
        if self.kind == "linear":
            return self.intercept + self.slope * age_min
        ages = [a for a, _ in self.knots]
        if age_min <= ages[0]:
            return self.knots[0][1]
        if age_min >= ages[-1]:
            return self.knots[-1][1]
        i = bisect_right(ages, age_min)
        a0, m0 = self.knots[i - 1]
        a1, m1 = self.knots[i]
        frac = (age_min - a0) / (a1 - a0)
        return m0 + frac * (m1 - m0)


def evaluate_decay(curve: DecayCurve, age_min: float) -> float:
    return curve.mae_at(age_min)


def default_decay_curves() -> dict[str, DecayCurve]:
    """Illustrative synthetic curves: monotone growth from a sub-error-floor
    start, flattening past six hours. Real field decay is a config input."""
    return {
        "pinn": DecayCurve(knots=((0, 0.30), (60, 0.36), (120, 0.44), (240, 0.58), (360, 0.70), (480, 0.74))),
        "fno": DecayCurve(knots=((0, 0.34), (60, 0.40), (120, 0.47), (240, 0.60), (360, 0.72), (480, 0.78))),
        "pcr": DecayCurve(knots=((0, 0.42), (60, 0.50), (120, 0.58), (240, 0.72), (360, 0.84), (480, 0.90))),
    }


def make_crossing_curves(
    cross_age_min: float = 360.0,
    short_history_h: float = 6.0,
    long_history_h: float = 48.0,
    mae_at_cross: float = 0.6,
) -> tuple[DecayCurve, DecayCurve]:
    """Two curves that trade places at cross_age_min: the short-history
    curve starts more accurate but decays faster."""
    short = DecayCurve(
        kind="linear",
        intercept=mae_at_cross - 0.001 * cross_age_min,
        slope=0.001,
        history_window_h=short_history_h,
    )
    long = DecayCurve(
        kind="linear",
        intercept=mae_at_cross - 0.0004 * cross_age_min,
        slope=0.0004,
        history_window_h=long_history_h,
    )
    return short, long


def expected_decay_period(base_period_min: float, extra_generations: int) -> float:
    """Average interval between generations when extra_generations extra
    publishes land uniformly inside each base period."""
    if base_period_min <= 0:
        raise ValueError("base period must be positive")
    if extra_generations < 0:
        raise ValueError("extra_generations must be non-negative")
    return base_period_min / (extra_generations + 1)


@dataclass(frozen=True)
class IndistinguishabilityBound:
    min_useful_period_min: float
    error_floor_mps: float
    computed_extra_generations: int
    reference_extra_generations: int


def indistinguishability_bound(config: "ScenarioConfig") -> IndistinguishabilityBound:
    """Physical limits on update cadence: new sensor data arrives only every
    sensor interval, and errors below the measurement band are noise."""
    interval = config.sensor_interval_min
    computed = int(config.base_period_min // interval)
    return IndistinguishabilityBound(
        min_useful_period_min=interval,
        error_floor_mps=config.measurement_error_band[0],
        computed_extra_generations=computed,
        reference_extra_generations=config.reference_extra_generations,
    )


# --------------------------------------------------------------------------
# Scenario config


@dataclass
class ScenarioConfig:
    horizon_h: float
    seed: int = 0
    sensor_interval_min: float = DEFAULT_SENSOR_INTERVAL_MIN
    dedicated: StageDurations | None = field(default_factory=StageDurations.calibrated)
    batch_tiers: list[BatchTierConfig] = field(default_factory=list)
    history_window_h: float = 6.0
    link: LinkModel = field(default_factory=LinkModel)
    model_sizes: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_MODEL_SIZES))
    decay_curves: dict[str, DecayCurve] = field(default_factory=default_decay_curves)
    measurement_error_band: tuple[float, float] = DEFAULT_MEASUREMENT_ERROR_BAND
    base_period_min: float = DEFAULT_BASE_PERIOD_MIN
    reference_extra_generations: int = DEFAULT_REFERENCE_EXTRA_GENERATIONS

    def validate(self) -> None:
        if self.horizon_h < 0:
            raise InvalidConfigError("horizon must be non-negative")
        if self.sensor_interval_min <= 0:
            raise InvalidConfigError("sensor interval must be positive")
        if self.dedicated is None and not self.batch_tiers:
            raise InvalidConfigError("at least one tier must be configured")
        lo, hi = self.measurement_error_band
        if not 0 <= lo <= hi:
            raise InvalidConfigError("measurement error band must satisfy 0 <= min <= max")
        for model_type, size in self.model_sizes.items():
            if size <= 0:
                raise InvalidConfigError(f"model size for {model_type!r} must be positive")


# --------------------------------------------------------------------------
# Event queue and trace


class EventKind(Enum):
    SENSOR_EMIT = 0
    PDC_DONE = 1
    SIM_TASK_DONE = 2
    TRANSFORM_DONE = 3
    TRAIN_DONE = 4
    TRANSFER_DONE = 5
    ITERATION_END = 6
    ALLOCATION_OPEN = 7
    ALLOCATION_EXPIRE = 8


_PIPELINE_EVENT_KINDS = {
    "pdc_done": EventKind.PDC_DONE,
    "sim_task_done": EventKind.SIM_TASK_DONE,
    "transform_done": EventKind.TRANSFORM_DONE,
    "train_done": EventKind.TRAIN_DONE,
}
_EVENT_KIND_NAMES = {v: k for k, v in _PIPELINE_EVENT_KINDS.items()}


@dataclass
class SimTrace:
    config_seed: int
    horizon_ms: int
    events: list[dict] = field(default_factory=list)

    def record(self, kind: str, t_ms: int, **fields) -> None:
        self.events.append({"kind": kind, "t_ms": t_ms, **fields})

    def of_kind(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["kind"] == kind]

    def publishes(self, model_type: str | None = None, tiers=None) -> list[dict]:
        out = self.of_kind("publish")
        if model_type is not None:
            out = [e for e in out if e["model_type"] == model_type]
        if tiers is not None:
            allowed = set(tiers)
            out = [e for e in out if e["tier"] in allowed]
        return out

    def deploys(self, model_type: str | None = None) -> list[dict]:
        out = [e for e in self.of_kind("deploy_decision") if e["decision"] == "deployed"]
        if model_type is not None:
            out = [e for e in out if e["model_type"] == model_type]
        return out

    def to_ndjson(self) -> str:
        return "".join(
            json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in self.events
        )

    @classmethod
    def from_ndjson(cls, text: str, seed: int = -1, horizon_ms: int = -1) -> "SimTrace":
        events = [json.loads(line) for line in text.splitlines() if line.strip()]
        return cls(config_seed=seed, horizon_ms=horizon_ms, events=events)


@dataclass
class _BatchTierState:
    config: BatchTierConfig
    rng: random.Random
    alloc_n: int = 0
    alloc_id: str | None = None
    expiry_ms: int | None = None
    iteration_n: int = 0


class _Simulator:
    def __init__(self, config: ScenarioConfig):
        config.validate()
        self.config = config
        self.horizon_ms = hours_to_ms(config.horizon_h)
        self.trace = SimTrace(config_seed=config.seed, horizon_ms=self.horizon_ms)
        self.slots = {m: DeployedSlot(m) for m in MODEL_TYPES}
        self._heap: list = []
        self._counter = 0
        self.dedicated_rng = random.Random(f"{config.seed}/dedicated")
        self.dedicated_instance: PipelineInstance | None = None
        self.dedicated_n = 0
        self.batch_states = [
            _BatchTierState(tier, random.Random(f"{config.seed}/batch/{i}/{tier.name}"))
            for i, tier in enumerate(config.batch_tiers)
        ]

    def schedule(self, t_ms: int, kind: EventKind, payload: dict | None = None) -> None:
        if t_ms >= self.horizon_ms:
            return
        self._counter += 1
        heapq.heappush(self._heap, (t_ms, kind.value, self._counter, kind, payload or {}))

    def run(self) -> SimTrace:
        if self.horizon_ms > 0:
            self.schedule(0, EventKind.SENSOR_EMIT)
            if self.config.dedicated is not None:
                self._launch_dedicated(0)
            for state in self.batch_states:
                self.schedule(
                    state.config.draw_queue_wait_ms(state.rng), EventKind.ALLOCATION_OPEN,
                    {"tier": state},
                )
        while self._heap:
            t, _, _, kind, payload = heapq.heappop(self._heap)
            self._dispatch(t, kind, payload)
        return self.trace

    # -- dispatch ---------------------------------------------------------

    def _dispatch(self, t: int, kind: EventKind, payload: dict) -> None:
        if kind is EventKind.SENSOR_EMIT:
            self._on_sensor_emit(t)
        elif kind in (
            EventKind.PDC_DONE,
            EventKind.SIM_TASK_DONE,
            EventKind.TRANSFORM_DONE,
            EventKind.TRAIN_DONE,
        ):
            self._on_pipeline_event(t, kind, payload)
        elif kind is EventKind.TRANSFER_DONE:
            self._on_transfer_done(t, payload)
        elif kind is EventKind.ALLOCATION_OPEN:
            self._on_allocation_open(t, payload["tier"])
        elif kind is EventKind.ALLOCATION_EXPIRE:
            self._on_allocation_expire(t, payload["tier"])
        elif kind is EventKind.ITERATION_END:
            self._on_iteration_end(t, payload["tier"])

    def _on_sensor_emit(self, t: int) -> None:
        self.trace.record("sensor_emit", t)
        for model_type in MODEL_TYPES:
            slot = self.slots[model_type]
            age_min = (
                ms_to_minutes(slot.model_age_ms(t)) if slot.current is not None else None
            )
            self.trace.record("staleness_sample", t, model_type=model_type, age_min=age_min)
        self.schedule(t + minutes_to_ms(self.config.sensor_interval_min), EventKind.SENSOR_EMIT)

    # -- dedicated tier ---------------------------------------------------

    def _launch_dedicated(self, t: int) -> None:
        instance = launch_instance(
            "dedicated",
            t,
            self.config.dedicated,
            self.dedicated_rng,
            self.config.history_window_h,
            f"dedicated-{self.dedicated_n}",
        )
        self.dedicated_n += 1
        self.dedicated_instance = instance
        self.trace.record("instance_launch", t, tier="dedicated", instance_id=instance.id)
        for when, kind_name, model_type in instance.timeline_events():
            self.schedule(
                when, _PIPELINE_EVENT_KINDS[kind_name],
                {"instance": instance, "model_type": model_type},
            )

    def _on_pipeline_event(self, t: int, kind: EventKind, payload: dict) -> None:
        if payload.get("batch"):
            # Opportunistic iterations are opaque: a train completion is a
            # publish, there is no inner stage machine.
            self._record_publish(
                t, payload["model_type"], payload["tier"], payload["cutoff_ms"],
                payload["instance_id"], payload["allocation_id"],
            )
            return
        instance: PipelineInstance = payload["instance"]
        kind_name = _EVENT_KIND_NAMES[kind]
        publishes = advance(instance, kind_name, payload.get("model_type"))
        for publish in publishes:
            self._record_publish(publish.time_ms, publish.model_type, publish.tier,
                                 publish.cutoff_ms, publish.instance_id, publish.allocation_id)
        if instance.tier == "dedicated" and not instance._trains_pending:
            # Done: relaunch back to back using the freshest data.
            self._launch_dedicated(instance.done_ms)

    # -- batch tiers ------------------------------------------------------

    def _on_allocation_open(self, t: int, state: _BatchTierState) -> None:
        expiry = t + hours_to_ms(state.config.allocation_limit_h)
        state.expiry_ms = expiry
        alloc_id = f"{state.config.name}-alloc-{state.alloc_n}"
        state.alloc_id = alloc_id
        state.alloc_n += 1
        self.trace.record("allocation_open", t, tier=state.config.name,
                          allocation_id=alloc_id, expiry_ms=expiry)
        self.schedule(expiry, EventKind.ALLOCATION_EXPIRE, {"tier": state})
        self._start_iteration(t, state)

    def _start_iteration(self, t: int, state: _BatchTierState) -> None:
        config = state.config
        if state.expiry_ms is None or state.expiry_ms - t < config.admission_budget_ms():
            return  # not enough allocation left; idle until expiry
        instance_id = f"{state.alloc_id}-it-{state.iteration_n}"
        state.iteration_n += 1
        envelope = config.iteration.draw_ms(state.rng)
        for model_type in config.model_types:
            publish_at = t + config.iteration.draw_ms(state.rng)
            if publish_at <= state.expiry_ms:
                self.schedule(
                    publish_at, EventKind.TRAIN_DONE,
                    {"instance": None, "batch": True, "tier": state.config.name,
                     "model_type": model_type, "cutoff_ms": t,
                     "instance_id": instance_id, "allocation_id": state.alloc_id},
                )
        # Iterations chain on the envelope draw; publishes past expiry are
        # lost when the job is killed at its limit.
        self.schedule(min(t + envelope, state.expiry_ms), EventKind.ITERATION_END,
                      {"tier": state})

    def _on_allocation_expire(self, t: int, state: _BatchTierState) -> None:
        state.expiry_ms = None
        self.trace.record("allocation_expire", t, tier=state.config.name)
        self.schedule(
            t + state.config.draw_queue_wait_ms(state.rng), EventKind.ALLOCATION_OPEN,
            {"tier": state},
        )

    def _on_iteration_end(self, t: int, state: _BatchTierState) -> None:
        self._start_iteration(t, state)

    # -- publishes, transfer, deployment ----------------------------------

    def _record_publish(self, t: int, model_type: str, tier: str, cutoff_ms: int,
                        instance_id: str, allocation_id: str | None) -> None:
        if t >= self.horizon_ms:
            return
        self.trace.record(
            "publish", t, model_type=model_type, tier=tier, cutoff_ms=cutoff_ms,
            instance_id=instance_id, allocation_id=allocation_id,
        )
        size = self.config.model_sizes[model_type]
        arrival = t + transfer_time_ms(self.config.link, model_type, size)
        self.schedule(
            arrival, EventKind.TRANSFER_DONE,
            {"model_type": model_type, "tier": tier, "cutoff_ms": cutoff_ms,
             "publish_ms": t, "size_bytes": size},
        )

    def _on_transfer_done(self, t: int, payload: dict) -> None:
        self.trace.record(
            "transfer_done", t, model_type=payload["model_type"], tier=payload["tier"],
            cutoff_ms=payload["cutoff_ms"], publish_ms=payload["publish_ms"],
        )
        artifact = ModelArtifact(
            model_type=payload["model_type"],
            cutoff_time_ms=payload["cutoff_ms"],
            produced_time_ms=payload["publish_ms"],
            source_tier=payload["tier"],
            history_window_h=self.config.history_window_h,
            declared_size_bytes=payload["size_bytes"],
        )
        slot = self.slots[payload["model_type"]]
        decision = slot.maybe_deploy(artifact, t)
        self.trace.record(
            "deploy_decision", t, model_type=payload["model_type"], tier=payload["tier"],
            cutoff_ms=payload["cutoff_ms"], decision=decision.value,
        )


def run_scenario(config: ScenarioConfig) -> SimTrace:
    return _Simulator(config).run()


def staleness_series(trace: SimTrace, model_type: str) -> list[tuple[int, float]]:
    """Deployed-model age over time: a sawtooth that resets to
    (deploy time - cutoff) at each deploy and grows with slope one
    in between. Points at every deploy instant and every sensor tick."""
    deploys = trace.deploys(model_type)
    if not deploys:
        raise NoDeploysError(f"trace has no deploys for {model_type!r}")
    deploy_times = [d["t_ms"] for d in deploys]
    deploy_cutoffs = [d["cutoff_ms"] for d in deploys]
    first = deploy_times[0]

    sample_times = sorted(
        {e["t_ms"] for e in trace.of_kind("sensor_emit") if e["t_ms"] >= first}
        | set(deploy_times)
    )
    series: list[tuple[int, float]] = []
    for t in sample_times:
        i = bisect_right(deploy_times, t) - 1
        series.append((t, ms_to_minutes(t - deploy_cutoffs[i])))
    return series
