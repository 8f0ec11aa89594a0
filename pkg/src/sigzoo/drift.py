"""Certainty scoring over incoming datasets and the retrain trigger.

A dataset's certainty is the share of its samples whose strongest fuzzy
membership clears a bar (default 0.5). When certainty sags below the policy
threshold the system plane refits everything: embedder, cluster model, store
index, zoo distributions. That pipeline runs under a non-blocking lease so
exactly one update is in flight, and user queries keep reading the previous
generation until the new one is swapped in whole.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import clustering, embedding
from .clustering import ClusterModel
from .datastore import DataRecord, DataStore
from .distribution import DatasetDistribution, compute_pdf
from .errors import (
    DimMismatch,
    EmptyInput,
    InsufficientData,
    NotFound,
    RangeError,
    SigzooError,
    StorageFailure,
    UpdateInProgress,
)
from .modelzoo import ModelZoo
from .vecio import canonical_json


@dataclass(frozen=True)
class CertaintyReport:
    dataset_id: str
    total: int
    certain: int
    certainty: float  # percentage
    membership_bar: float
    histogram: tuple  # 10 bins over [0, 1]
    cluster_model_version: int

    def to_payload(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "total": self.total,
            "certain": self.certain,
            "certainty": self.certainty,
            "membership_bar": self.membership_bar,
            "histogram": list(self.histogram),
            "cluster_model_version": self.cluster_model_version,
        }


@dataclass(frozen=True)
class TriggerPolicy:
    certainty_threshold: float = 80.0
    warmup_datasets: int = 5
    cooldown: int = 1

    def __post_init__(self):
        if not 0.0 < self.certainty_threshold < 100.0:
            raise RangeError(
                "certainty threshold must lie in (0, 100)",
                threshold=self.certainty_threshold,
            )
        if self.warmup_datasets < 0 or self.cooldown < 0:
            raise RangeError("warmup and cooldown must be nonnegative")


@dataclass(frozen=True)
class MonitorHistory:
    """What the trigger rule needs to know about the past."""

    datasets_seen: int = 0  # sequence index of the dataset being scored
    last_trigger_at: int | None = None


def compute_certainty(
    model: ClusterModel,
    embeddings: np.ndarray,
    bar: float = 0.5,
    dataset_id: str = "",
) -> CertaintyReport:
    """Share of samples whose max fuzzy membership reaches ``bar``."""
    if not 0.0 < bar < 1.0:
        raise RangeError("membership bar must lie in (0, 1)", bar=bar)
    pts = np.asarray(embeddings, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise EmptyInput("certainty needs a nonempty sample matrix")
    if pts.shape[1] != model.dim:
        raise DimMismatch("embedding dim does not match the model",
                          expected=model.dim, got=int(pts.shape[1]))
    top = clustering.max_memberships(model, pts)
    certain = int((top >= bar).sum())
    total = int(top.shape[0])
    hist, _ = np.histogram(top, bins=10, range=(0.0, 1.0))
    return CertaintyReport(
        dataset_id=dataset_id,
        total=total,
        certain=certain,
        certainty=100.0 * certain / total,
        membership_bar=bar,
        histogram=tuple(int(h) for h in hist),
        cluster_model_version=model.version,
    )


def should_trigger(report: CertaintyReport, policy: TriggerPolicy,
                   history: MonitorHistory) -> bool:
    """Pure decision: low certainty, past warmup, out of cooldown."""
    seq = history.datasets_seen
    if seq < policy.warmup_datasets:
        return False
    if report.certainty >= policy.certainty_threshold:
        return False
    if history.last_trigger_at is not None and seq - history.last_trigger_at <= policy.cooldown:
        return False
    return True


class DriftMonitor:
    """Sequences reports, applies the policy, and keeps the audit trail."""

    def __init__(self, policy: TriggerPolicy, audit_path: str | Path | None = None):
        self.policy = policy
        self.audit_path = Path(audit_path) if audit_path else None
        self._lock = threading.Lock()
        self._history = MonitorHistory()

    @property
    def history(self) -> MonitorHistory:
        return self._history

    def observe(self, report: CertaintyReport) -> bool:
        """Record one dataset's report; True when an update should fire."""
        with self._lock:
            fire = should_trigger(report, self.policy, self._history)
            seq = self._history.datasets_seen
            self._history = MonitorHistory(
                datasets_seen=seq + 1,
                last_trigger_at=seq if fire else self._history.last_trigger_at,
            )
        self.audit({
            "event": "certainty",
            "dataset_id": report.dataset_id,
            "sequence": seq,
            "certainty": round(report.certainty, 4),
            "trigger": fire,
            "cluster_model_version": report.cluster_model_version,
        })
        return fire

    def audit(self, entry: dict) -> None:
        if self.audit_path is None:
            return
        entry = {"ts": time.time(), **entry}
        with self._lock:
            with open(self.audit_path, "a", encoding="utf-8") as f:
                f.write(canonical_json(entry) + "\n")


class UpdateLease:
    """Non-blocking exclusive lease: one system update at a time."""

    def __init__(self):
        self._lock = threading.Lock()

    def __enter__(self):
        if not self._lock.acquire(blocking=False):
            raise UpdateInProgress("a system update is already running")
        return self

    def __exit__(self, *exc):
        self._lock.release()
        return False


@dataclass(frozen=True)
class UpdateSummary:
    embedder_version: int
    cluster_model_version: int
    chosen_k: int
    records_total: int
    records_changed: int
    zoo_updated: int
    zoo_stale: tuple
    reused_stored_embeddings: bool
    reason: str
    elapsed_seconds: float

    def to_payload(self) -> dict:
        return {
            "embedder_version": self.embedder_version,
            "cluster_model_version": self.cluster_model_version,
            "chosen_k": self.chosen_k,
            "records_total": self.records_total,
            "records_changed": self.records_changed,
            "zoo_updated": self.zoo_updated,
            "zoo_stale": list(self.zoo_stale),
            "reused_stored_embeddings": self.reused_stored_embeddings,
            "reason": self.reason,
            "elapsed_seconds": self.elapsed_seconds,
        }


@dataclass
class UpdateOutcome:
    summary: UpdateSummary
    embedder: embedding.EmbedderSpec | None
    model: ClusterModel


def _stage(name: str, fn):
    try:
        return fn()
    except SigzooError as exc:
        exc.details.setdefault("stage", name)
        raise
    except Exception as exc:
        raise StorageFailure(f"update stage '{name}' failed: {exc}", stage=name) from exc


def run_system_update(
    store: DataStore,
    zoo: ModelZoo,
    *,
    embed_dim: int,
    k_min: int,
    k_max: int,
    seed: int,
    elbow_seeds: int = 5,
    fuzzifier_m: float = clustering.DEFAULT_FUZZIFIER,
    current_embedder: embedding.EmbedderSpec | None = None,
    current_version: int = 0,
    reason: str = "manual",
) -> UpdateOutcome:
    """Full system-plane refit. Caller holds the update lease and swaps the
    returned generation in atomically; on any stage error the previous
    generation stays authoritative because nothing here mutates it until the
    reindex stage, which is itself atomic.
    """
    started = time.monotonic()
    snap = store.snapshot
    live = [int(r) for r in snap.live_rows()]
    if not live:
        raise InsufficientData("store holds no records to refit from")

    raws = [snap.raws[r] for r in live]
    have_raw = all(raw is not None for raw in raws)
    new_version = max(current_version, snap.version) + 1

    embedder = current_embedder
    if have_raw:
        def fit_embed():
            samples = [
                embedding.RawSample(id=snap.ids[r], payload=snap.raws[r]) for r in live
            ]
            spec = embedding.fit_embedder(
                samples, output_dim=embed_dim,
                prev_version=current_embedder.version if current_embedder else 0,
            )
            mat = embedding.embed_batch(spec, np.stack([s.payload for s in samples]))
            return spec, mat

        embedder, embedded = _stage("fit_embedder", fit_embed)

        def reingest():
            batch = [
                DataRecord(
                    sample_id=snap.ids[r],
                    embedding=embedded[i],
                    label=snap.labels[r],
                    label_schema=snap.schemas[r],
                    source=snap.sources[r],
                    raw=snap.raws[r],
                )
                for i, r in enumerate(live)
            ]
            store.insert(batch)

        _stage("re_embed", reingest)
        work = store.snapshot
        rows = [int(r) for r in work.live_rows() if not work.pending[r]]
        points = work.emb[np.array(rows, dtype=np.int64)].astype(np.float64)
    else:
        rows = [r for r in live if not snap.pending[r]]
        if not rows:
            raise InsufficientData("no embedded records available for refit")
        points = snap.emb[np.array(rows, dtype=np.int64)].astype(np.float64)

    def refit():
        hi = min(k_max, points.shape[0])
        lo = min(k_min, hi - 1) if hi > 1 else 1
        if hi <= lo:
            hi = lo + 1
        report = clustering.select_k_elbow(
            points, lo, hi, seed=seed, seeds_per_k=elbow_seeds, fuzzifier_m=fuzzifier_m
        )
        model = clustering.fit_kmeans(
            points, report.chosen_k, seed=seed,
            fuzzifier_m=fuzzifier_m, version=new_version,
        )
        return report, model

    elbow, model = _stage("fit_clusters", refit)
    reindexed = _stage("reindex", lambda: store.reindex(model))

    def recompute(model_id: str) -> DatasetDistribution:
        refs = list(zoo.get(model_id).training_ref)
        if not refs:
            raise NotFound("model has no training references", model_id=model_id)
        vectors, missing = store.embeddings_for_ids(refs)
        if missing:
            raise NotFound("training references missing from the store",
                           model_id=model_id, missing=missing[:5])
        return compute_pdf(model, vectors.astype(np.float64))

    refreshed = _stage(
        "refresh_zoo", lambda: zoo.refresh_distributions(model.version, recompute)
    )

    summary = UpdateSummary(
        embedder_version=embedder.version if embedder is not None else 0,
        cluster_model_version=model.version,
        chosen_k=model.k,
        records_total=int(reindexed["total"]),
        records_changed=int(reindexed["changed"]),
        zoo_updated=int(refreshed["updated"]),
        zoo_stale=tuple(refreshed["stale"]),
        reused_stored_embeddings=not have_raw,
        reason=reason,
        elapsed_seconds=time.monotonic() - started,
    )
    return UpdateOutcome(summary=summary, embedder=embedder, model=model)
