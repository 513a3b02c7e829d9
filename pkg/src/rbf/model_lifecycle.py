"""Model artifact registry and the freshness-gated deployment slot.

A published model is two pushes to the repository: the opaque content
under "model/<type>" and a JSON metadata sidecar under
"model/<type>/meta". The sidecar is pushed last and carries the commit:
a model version exists once its metadata version exists, and the two
share a version number.

The edge-side gate is maybe_deploy: an incoming artifact replaces the
deployed one only if its training cutoff is strictly newer, so the
deployed model's training data never goes backwards in freshness no
matter what order tiers finish in.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum

from .data_mover import DataMoverError, FileRepository, FileVersion


class ModelType(str, Enum):
    PINN = "pinn"
    FNO = "fno"
    PCR = "pcr"


class SourceTier(str, Enum):
    DEDICATED = "dedicated"
    OPPORTUNISTIC = "opportunistic"


class DeployDecision(str, Enum):
    DEPLOYED = "deployed"
    SKIPPED_STALE = "skipped_stale"


class LifecycleError(Exception):
    pass


class TypeMismatchError(LifecycleError):
    pass


class EmptySlotError(LifecycleError):
    pass


@dataclass(frozen=True)
class ModelArtifact:
    model_type: str
    cutoff_time_ms: int  # latest sensor timestamp in the training data
    produced_time_ms: int  # training completion
    source_tier: str
    history_window_h: float
    content: bytes | None = None  # None for simulated artifacts
    declared_size_bytes: int | None = None
    artifact_version: int | None = None

    def __post_init__(self):
        if self.cutoff_time_ms > self.produced_time_ms:
            raise ValueError("cutoff_time cannot be after produced_time")
        if self.content is None and self.declared_size_bytes is None:
            raise ValueError("an artifact needs content or a declared size")
        if (
            self.content is not None
            and self.declared_size_bytes is not None
            and len(self.content) != self.declared_size_bytes
        ):
            raise ValueError("declared size disagrees with content length")

    @property
    def size_bytes(self) -> int:
        if self.content is not None:
            return len(self.content)
        return self.declared_size_bytes

    def metadata_json(self) -> str:
        return json.dumps(
            {
                "model_type": self.model_type,
                "cutoff_time_ms": self.cutoff_time_ms,
                "produced_time_ms": self.produced_time_ms,
                "source_tier": self.source_tier,
                "history_window_h": self.history_window_h,
                "size_bytes": self.size_bytes,
            },
            sort_keys=True,
            separators=(",", ":"),
        )


def model_file_name(model_type: str) -> str:
    return f"model/{model_type}"


def metadata_file_name(model_type: str) -> str:
    return f"model/{model_type}/meta"


def publish_model(repo: FileRepository, artifact: ModelArtifact) -> FileVersion:
    """Push content then metadata; the metadata push commits the version."""
    if artifact.content is None:
        raise LifecycleError("cannot publish an artifact without content")
    content_record = repo.push_file(model_file_name(artifact.model_type), artifact.content)
    meta_record = repo.push_file(
        metadata_file_name(artifact.model_type),
        artifact.metadata_json().encode("utf-8"),
    )
    if meta_record.version != content_record.version:
        raise LifecycleError(
            f"model/meta version skew for {artifact.model_type}: "
            f"{content_record.version} vs {meta_record.version}"
        )
    return content_record


def pull_model(
    repo: FileRepository, model_type: str, version: int | None = None
) -> ModelArtifact:
    """Reassemble an artifact from its content and metadata pushes.

    Uses the metadata topic to resolve "latest", since the sidecar push is
    the commit point.
    """
    if version is None:
        version = repo.latest_version(metadata_file_name(model_type)).version
    meta_raw = repo.pull_file(metadata_file_name(model_type), version)
    content = repo.pull_file(model_file_name(model_type), version)
    meta = json.loads(meta_raw)
    artifact = ModelArtifact(
        model_type=meta["model_type"],
        cutoff_time_ms=meta["cutoff_time_ms"],
        produced_time_ms=meta["produced_time_ms"],
        source_tier=meta["source_tier"],
        history_window_h=meta["history_window_h"],
        content=content,
        artifact_version=version,
    )
    if artifact.size_bytes != meta["size_bytes"]:
        raise DataMoverError(
            f"metadata size {meta['size_bytes']} != content size {artifact.size_bytes}"
        )
    return artifact


@dataclass
class DeployRecord:
    time_ms: int
    artifact_version: int | None
    cutoff_time_ms: int
    source_tier: str


@dataclass
class DeployedSlot:
    model_type: str
    current: ModelArtifact | None = None
    deploy_history: list[DeployRecord] = field(default_factory=list)

    def maybe_deploy(self, incoming: ModelArtifact, now_ms: int) -> DeployDecision:
        """Deploy only if the incoming cutoff is strictly newer.

        Equal cutoffs are skipped, so the deployed cutoff history is
        strictly increasing.
        """
        if incoming.model_type != self.model_type:
            raise TypeMismatchError(
                f"slot is {self.model_type!r}, artifact is {incoming.model_type!r}"
            )
        if self.current is not None and incoming.cutoff_time_ms <= self.current.cutoff_time_ms:
            return DeployDecision.SKIPPED_STALE
        self.current = incoming
        self.deploy_history.append(
            DeployRecord(
                time_ms=now_ms,
                artifact_version=incoming.artifact_version,
                cutoff_time_ms=incoming.cutoff_time_ms,
                source_tier=incoming.source_tier,
            )
        )
        return DeployDecision.DEPLOYED

    def model_age_ms(self, now_ms: int) -> int:
        """Age of the deployed model, measured from its training cutoff.

        Cutoff-based age is what the accuracy decay curves are a function
        of: the model knows nothing past the last sensor sample it was
        trained on.
        """
        if self.current is None:
            raise EmptySlotError(f"no model deployed for {self.model_type!r}")
        return now_ms - self.current.cutoff_time_ms

    def history_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["time_ms", "version", "cutoff_ms", "source_tier"])
        for rec in self.deploy_history:
            writer.writerow(
                [rec.time_ms, rec.artifact_version, rec.cutoff_time_ms, rec.source_tier]
            )
        return out.getvalue()


def maybe_deploy(slot: DeployedSlot, incoming: ModelArtifact, now_ms: int) -> DeployDecision:
    return slot.maybe_deploy(incoming, now_ms)


def model_age_ms(slot: DeployedSlot, now_ms: int) -> int:
    return slot.model_age_ms(now_ms)
