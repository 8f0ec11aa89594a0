"""Registry of trained model artifacts keyed by training-data distribution.

Artifacts are opaque: the zoo hashes and stores them but never loads or
executes one. Ranking a candidate dataset against the zoo is pure
distribution arithmetic, so recommend/rank_all run lock-free against an
immutable snapshot dict that writers replace wholesale.

On disk: a JSON manifest plus a content-addressed ``artifacts/`` directory
(file name = sha256 of the bytes, so duplicate uploads dedupe for free).
"""

from __future__ import annotations

import hashlib
import os
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

from .distribution import DatasetDistribution, jsd
from .errors import (
    DuplicateId,
    HashMismatch,
    NotFound,
    RangeError,
    StorageFailure,
    VersionMismatch,
)
from .vecio import canonical_json

MANIFEST_NAME = "zoo.json"
ARTIFACT_DIR = "artifacts"


@dataclass(frozen=True)
class ModelRecord:
    model_id: str
    train_distribution: DatasetDistribution
    content_hash: str
    artifact_uri: str = ""  # external reference; empty when blob-stored
    metadata: dict = field(default_factory=dict)
    training_ref: tuple = ()  # datastore sample ids behind train_distribution
    stale: bool = False

    def to_payload(self) -> dict:
        return {
            "model_id": self.model_id,
            "train_distribution": self.train_distribution.to_payload(),
            "content_hash": self.content_hash,
            "artifact_uri": self.artifact_uri,
            "metadata": self.metadata,
            "training_ref": list(self.training_ref),
            "stale": self.stale,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ModelRecord":
        return cls(
            model_id=payload["model_id"],
            train_distribution=DatasetDistribution.from_payload(payload["train_distribution"]),
            content_hash=payload["content_hash"],
            artifact_uri=payload.get("artifact_uri", ""),
            metadata=dict(payload.get("metadata", {})),
            training_ref=tuple(payload.get("training_ref", ())),
            stale=bool(payload.get("stale", False)),
        )


@dataclass(frozen=True)
class Recommendation:
    decision: str  # "fine-tune" | "train-from-scratch"
    ranked: tuple  # ((model_id, jsd), ...) ascending, ties by model_id
    chosen: str | None
    threshold: float
    excluded: tuple = ()  # ((model_id, reason), ...)

    def to_payload(self) -> dict:
        return {
            "decision": self.decision,
            "ranked": [{"model_id": m, "jsd": d} for m, d in self.ranked],
            "chosen": self.chosen,
            "threshold": self.threshold,
            "excluded": [{"model_id": m, "reason": r} for m, r in self.excluded],
        }


class ModelZoo:
    """One writer at a time; reads run against whatever snapshot they grab."""

    def __init__(self, directory: str | Path, cluster_model_version: int = 0):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        (self.directory / ARTIFACT_DIR).mkdir(exist_ok=True)
        self._manifest_path = self.directory / MANIFEST_NAME
        self._lock = threading.Lock()
        self._models: dict = {}
        self.version = cluster_model_version
        if self._manifest_path.exists():
            self._load()

    def _load(self) -> None:
        import json

        payload = json.loads(self._manifest_path.read_text())
        self.version = int(payload.get("cluster_model_version", 0))
        self._models = {
            entry["model_id"]: ModelRecord.from_payload(entry)
            for entry in payload.get("models", [])
        }

    def _persist(self, models: dict, version: int) -> None:
        payload = {
            "format": "sigzoo-zoo",
            "version": 1,
            "cluster_model_version": version,
            "models": [models[k].to_payload() for k in sorted(models)],
        }
        tmp = self._manifest_path.with_suffix(".tmp")
        try:
            tmp.write_text(canonical_json(payload))
            os.replace(tmp, self._manifest_path)
        except OSError as exc:
            raise StorageFailure(f"zoo manifest write failed: {exc}")

    # -- registration ----------------------------------------------------------

    def artifact_path(self, content_hash: str) -> Path:
        return self.directory / ARTIFACT_DIR / content_hash

    def register_model(
        self,
        model_id: str,
        train_distribution: DatasetDistribution,
        artifact: bytes | None = None,
        artifact_uri: str = "",
        content_hash: str = "",
        metadata: dict | None = None,
        training_ref: tuple = (),
    ) -> str:
        """Immutable registration: a new version of a model is a new id."""
        with self._lock:
            if model_id in self._models:
                raise DuplicateId("model_id already registered", model_id=model_id)
            if train_distribution.cluster_model_version != self.version:
                raise VersionMismatch(
                    "train distribution is not at the current cluster version",
                    offered=train_distribution.cluster_model_version,
                    current=self.version,
                )
            if artifact is not None:
                digest = hashlib.sha256(artifact).hexdigest()
                if content_hash and content_hash != digest:
                    raise HashMismatch(
                        "artifact bytes do not match the declared hash",
                        declared=content_hash, computed=digest,
                    )
                content_hash = digest
                path = self.artifact_path(digest)
                if not path.exists():
                    try:
                        tmp = path.with_suffix(".tmp")
                        tmp.write_bytes(artifact)
                        os.replace(tmp, path)
                    except OSError as exc:
                        raise StorageFailure(f"artifact write failed: {exc}")
            elif not artifact_uri:
                raise HashMismatch("artifact bytes or an external uri is required")
            record = ModelRecord(
                model_id=model_id,
                train_distribution=train_distribution,
                content_hash=content_hash,
                artifact_uri=artifact_uri,
                metadata=dict(metadata or {}),
                training_ref=tuple(training_ref),
            )
            models = dict(self._models)
            models[model_id] = record
            self._persist(models, self.version)
            self._models = models
            return model_id

    def get(self, model_id: str) -> ModelRecord:
        record = self._models.get(model_id)
        if record is None:
            raise NotFound("unknown model_id", model_id=model_id)
        return record

    def artifact_bytes(self, model_id: str) -> bytes:
        record = self.get(model_id)
        if not record.content_hash:
            raise NotFound("model has no stored artifact", model_id=model_id)
        path = self.artifact_path(record.content_hash)
        if not path.exists():
            raise NotFound("artifact blob missing", model_id=model_id)
        data = path.read_bytes()
        digest = hashlib.sha256(data).hexdigest()
        if digest != record.content_hash:
            raise HashMismatch(
                "stored artifact corrupt", declared=record.content_hash, computed=digest
            )
        return data

    # -- ranking ---------------------------------------------------------------

    def _usable(self, input_pdf: DatasetDistribution):
        if input_pdf.cluster_model_version != self.version:
            raise VersionMismatch(
                "input distribution is not at the current cluster version",
                offered=input_pdf.cluster_model_version, current=self.version,
            )
        models = self._models
        usable = []
        excluded = []
        for mid in sorted(models):
            rec = models[mid]
            if rec.stale:
                excluded.append((mid, "stale"))
            elif rec.train_distribution.cluster_model_version != self.version:
                excluded.append((mid, "version-mismatch"))
            else:
                usable.append(rec)
        return usable, tuple(excluded)

    def rank_all(self, input_pdf: DatasetDistribution) -> tuple:
        """Ascending (model_id, jsd) pairs; equal divergences tie-break by id."""
        usable, _ = self._usable(input_pdf)
        scored = [(rec.model_id, jsd(input_pdf, rec.train_distribution)) for rec in usable]
        scored.sort(key=lambda pair: (pair[1], pair[0]))
        return tuple(scored)

    def recommend(self, input_pdf: DatasetDistribution, threshold: float) -> Recommendation:
        if not 0.0 < threshold <= 1.0:
            raise RangeError("threshold must lie in (0, 1]", threshold=threshold)
        usable, excluded = self._usable(input_pdf)
        scored = [(rec.model_id, jsd(input_pdf, rec.train_distribution)) for rec in usable]
        scored.sort(key=lambda pair: (pair[1], pair[0]))
        ranked = tuple(scored)
        if ranked and ranked[0][1] < threshold:
            return Recommendation(
                decision="fine-tune", ranked=ranked, chosen=ranked[0][0],
                threshold=threshold, excluded=excluded,
            )
        return Recommendation(
            decision="train-from-scratch", ranked=ranked, chosen=None,
            threshold=threshold, excluded=excluded,
        )

    # -- system-plane refresh ---------------------------------------------------

    def refresh_distributions(self, model_version: int, recompute) -> dict:
        """Move every entry to ``model_version`` via ``recompute(model_id) ->
        DatasetDistribution``; entries whose callback fails go stale instead
        of aborting the refresh."""
        with self._lock:
            if model_version <= self.version and self._models:
                raise VersionMismatch(
                    "refresh requires a newer model version",
                    offered=model_version, current=self.version,
                )
            models = dict(self._models)
            updated = 0
            stale_ids = []
            failures = {}
            for mid in sorted(models):
                try:
                    dist = recompute(mid)
                    if dist.cluster_model_version != model_version:
                        raise VersionMismatch(
                            "callback produced a distribution at the wrong version",
                            offered=dist.cluster_model_version, expected=model_version,
                        )
                    models[mid] = replace(models[mid], train_distribution=dist, stale=False)
                    updated += 1
                except Exception as exc:
                    models[mid] = replace(models[mid], stale=True)
                    stale_ids.append(mid)
                    failures[mid] = str(exc)
            self._persist(models, model_version)
            self._models = models
            self.version = model_version
            return {
                "updated": updated,
                "stale": stale_ids,
                "failures": failures,
                "version": model_version,
            }

    def stats(self) -> dict:
        models = self._models
        return {
            "models": len(models),
            "stale": sum(1 for m in models.values() if m.stale),
            "cluster_model_version": self.version,
            "model_ids": sorted(models),
        }
