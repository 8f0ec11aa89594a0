"""Ties the pipeline together behind one object the API and CLI both drive.

A *generation* is the pair (embedder, cluster model) the service currently
answers with. Queries grab the generation and a store snapshot together and
compute everything against that pair, so a response can never mix versions
even while a system update swaps the world underneath. Updates run in a
background thread under an exclusive lease; queries keep flowing against the
old generation until the swap, which is a single attribute assignment.
"""

from __future__ import annotations

import threading
import time
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import embedding, kernels, vecio
from .clustering import ClusterModel
from .config import ServiceConfig
from .datastore import DataRecord, DataStore
from .distribution import DatasetDistribution, compute_pdf
from .drift import (
    DriftMonitor,
    TriggerPolicy,
    UpdateLease,
    compute_certainty,
    run_system_update,
)
from .errors import (
    DimMismatch,
    EmptyInput,
    NotFound,
    NotInitialized,
    RangeError,
)
from .modelzoo import ModelZoo

EMBEDDER_FILE = "embedder.bin"
CLUSTER_FILE = "cluster.bin"
META_FILE = "meta.json"
AUDIT_FILE = "audit.jsonl"

_PDF_CACHE_SIZE = 256
_VIEW_RETRIES = 50

QUERY_OPS = ("lookup", "recommend", "certainty")


def records_from_payload(entries: list) -> list:
    """Wire-format record dicts (label base64-decoded upstream) to DataRecords."""
    records = []
    for entry in entries:
        sid = entry.get("sample_id")
        if not sid:
            raise EmptyInput("record missing sample_id")
        emb = entry.get("embedding")
        raw = entry.get("raw")
        records.append(DataRecord(
            sample_id=sid,
            embedding=None if emb is None else np.asarray(emb, dtype=np.float32),
            label=entry["label"],
            label_schema=entry.get("label_schema", ""),
            source=entry.get("source", ""),
            raw=None if raw is None else np.asarray(raw, dtype=np.float64),
        ))
    return records


@dataclass(frozen=True)
class Generation:
    number: int
    embedder: embedding.EmbedderSpec | None
    model: ClusterModel | None


class SigzooService:
    """Everything stateful lives here; handlers hold no state of their own."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)

        embedder = None
        model = None
        emb_path = self.data_dir / EMBEDDER_FILE
        model_path = self.data_dir / CLUSTER_FILE
        if emb_path.exists():
            embedder = embedding.EmbedderSpec.load(emb_path)
        if model_path.exists():
            model = ClusterModel.load(model_path)

        self.store = DataStore.open(self.data_dir / "store", model)
        self.zoo = ModelZoo(self.data_dir / "zoo", model.version if model else 0)
        self.monitor = DriftMonitor(
            TriggerPolicy(
                certainty_threshold=config.certainty_threshold,
                warmup_datasets=config.warmup_datasets,
                cooldown=config.cooldown,
            ),
            audit_path=self.data_dir / AUDIT_FILE,
        )
        self.lease = UpdateLease()
        self._gen = Generation(model.version if model else 0, embedder, model)
        self._pdf_cache: OrderedDict = OrderedDict()
        self._cache_lock = threading.Lock()

    # -- generation plumbing ---------------------------------------------------

    @property
    def generation(self) -> Generation:
        return self._gen

    def _acquire_view(self):
        """Generation plus a store snapshot at the same version. The store
        flips first during an update, so briefly retry before serving (a
        mismatched pair only yields honest VersionMismatch errors anyway)."""
        for _ in range(_VIEW_RETRIES):
            gen = self._gen
            snap = self.store.snapshot
            if gen.model is None or snap.version == gen.model.version:
                return gen, snap
            time.sleep(0.002)
        return self._gen, self.store.snapshot

    def _persist_generation(self, gen: Generation) -> None:
        if gen.embedder is not None:
            gen.embedder.save(self.data_dir / EMBEDDER_FILE)
        if gen.model is not None:
            gen.model.save(self.data_dir / CLUSTER_FILE)
        meta = {
            "generation": gen.number,
            "embedder_version": gen.embedder.version if gen.embedder else 0,
            "cluster_model_version": gen.model.version if gen.model else 0,
            "saved_at": time.time(),
        }
        tmp = self.data_dir / (META_FILE + ".tmp")
        tmp.write_text(vecio.canonical_json(meta))
        tmp.replace(self.data_dir / META_FILE)

    # -- ingest ------------------------------------------------------------------

    def ingest(self, records: list) -> dict:
        if not records:
            raise EmptyInput("nothing to ingest")
        inserted = self.store.insert(records)
        return {"inserted": inserted, "records": self.store.stats()["records"]}

    def ingest_embeddings(self, ids, vectors, sources, labels=None, schemas=None) -> dict:
        """Binary-upload path: embeddings plus per-row label sidecar data."""
        records = []
        for i, sid in enumerate(ids):
            records.append(DataRecord(
                sample_id=sid,
                embedding=np.asarray(vectors[i], dtype=np.float32),
                label=labels[i] if labels else b"unlabeled",
                label_schema=schemas[i] if schemas else "",
                source=sources[i] if sources else "",
            ))
        return self.ingest(records)

    # -- query -------------------------------------------------------------------

    def _embed_request(self, gen: Generation, samples: dict) -> np.ndarray:
        kinds = [k for k in ("embeddings", "raw") if samples.get(k) is not None]
        if len(kinds) != 1:
            raise EmptyInput("request must carry exactly one of embeddings or raw samples")
        if kinds[0] == "embeddings":
            arr = np.asarray(samples["embeddings"], dtype=np.float64)
            if arr.ndim != 2 or arr.shape[0] == 0:
                raise EmptyInput("embeddings must be a nonempty matrix")
            if gen.model is not None and arr.shape[1] != gen.model.dim:
                raise DimMismatch(
                    "embedding dim does not match the current model",
                    expected=gen.model.dim, got=int(arr.shape[1]),
                )
            if not np.isfinite(arr).all():
                raise EmptyInput("embeddings contain non-finite values")
            return arr
        if gen.embedder is None:
            raise NotInitialized("no embedder fitted; send embeddings instead of raw samples")
        raw = np.asarray(samples["raw"], dtype=np.float64)
        if raw.ndim < 2 or raw.shape[0] == 0:
            raise EmptyInput("raw samples must be a nonempty stack")
        return embedding.embed_batch(gen.embedder, raw).astype(np.float64)

    def handle_query(
        self,
        dataset_id: str,
        samples: dict,
        ops: tuple = ("lookup", "recommend", "certainty"),
        n_override: int | None = None,
        seed: int | None = None,
    ) -> dict:
        """One request, one generation: embed, assign, PDF, then the asked-for
        ops, all against a single (generation, snapshot) pair."""
        for op in ops:
            if op not in QUERY_OPS:
                raise RangeError("unknown query op", op=op, known=list(QUERY_OPS))
        gen, snap = self._acquire_view()
        if gen.model is None:
            raise NotInitialized("no cluster model fitted yet; ingest data and run an update")

        timings = {}
        t0 = time.perf_counter()
        points = self._embed_request(gen, samples)
        timings["embed_ms"] = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        pdf = compute_pdf(gen.model, points)
        timings["pdf_ms"] = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        report = compute_certainty(
            gen.model, points, bar=self.config.membership_bar, dataset_id=dataset_id
        )
        timings["certainty_ms"] = (time.perf_counter() - t0) * 1000.0

        response = {
            "dataset_id": dataset_id,
            "generation": gen.number,
            "pdf": pdf.to_payload(),
            "timings": timings,
        }

        if "lookup" in ops:
            n = n_override if n_override is not None else points.shape[0]
            use_seed = seed if seed is not None else self.config.seed
            t0 = time.perf_counter()
            result = self.store.lookup_by_distribution(pdf, n, use_seed)
            timings["lookup_ms"] = (time.perf_counter() - t0) * 1000.0
            response["lookup"] = result.to_payload()
        if "recommend" in ops:
            t0 = time.perf_counter()
            rec = self.zoo.recommend(pdf, self.config.jsd_threshold)
            timings["recommend_ms"] = (time.perf_counter() - t0) * 1000.0
            response["recommendation"] = rec.to_payload()
        if "certainty" in ops:
            response["certainty"] = report.to_payload()

        with self._cache_lock:
            self._pdf_cache[dataset_id] = pdf
            self._pdf_cache.move_to_end(dataset_id)
            while len(self._pdf_cache) > _PDF_CACHE_SIZE:
                self._pdf_cache.popitem(last=False)

        fire = self.monitor.observe(report)
        if fire and self.config.auto_update:
            self._spawn_update(reason="drift")
        return response

    def pseudo_label(self, vector, threshold: float | None = None) -> dict:
        t = threshold if threshold is not None else self.config.require_pseudo_label_threshold()
        if t <= 0:
            raise RangeError("pseudo-label threshold must be positive", threshold=t)
        outcome = self.store.pseudo_label(np.asarray(vector, dtype=np.float64), t)
        payload = outcome.to_payload()
        payload["threshold"] = t
        return payload

    # -- zoo ----------------------------------------------------------------------

    def register_model(
        self,
        model_id: str,
        distribution: dict | DatasetDistribution,
        artifact: bytes | None = None,
        artifact_uri: str = "",
        content_hash: str = "",
        metadata: dict | None = None,
        training_ref: tuple = (),
    ) -> dict:
        dist = (
            distribution
            if isinstance(distribution, DatasetDistribution)
            else DatasetDistribution.from_payload(distribution)
        )
        mid = self.zoo.register_model(
            model_id, dist,
            artifact=artifact, artifact_uri=artifact_uri, content_hash=content_hash,
            metadata=metadata, training_ref=training_ref,
        )
        return {"model_id": mid, "models": self.zoo.stats()["models"]}

    def rank_models(self, dataset_id: str) -> dict:
        with self._cache_lock:
            pdf = self._pdf_cache.get(dataset_id)
        if pdf is None:
            raise NotFound(
                "dataset has no cached distribution; query it first",
                dataset_id=dataset_id,
            )
        ranked = self.zoo.rank_all(pdf)
        return {
            "dataset_id": dataset_id,
            "generation": self._gen.number,
            "ranked": [{"model_id": m, "jsd": d} for m, d in ranked],
        }

    # -- system plane ---------------------------------------------------------------

    def force_update(self, reason: str = "manual") -> dict:
        """Run the full refit pipeline now; 409 if one is already running."""
        with self.lease:
            gen = self._gen
            outcome = run_system_update(
                self.store, self.zoo,
                embed_dim=self.config.embed_dim,
                k_min=self.config.k_min,
                k_max=self.config.k_max,
                seed=self.config.seed,
                elbow_seeds=self.config.elbow_seeds,
                fuzzifier_m=self.config.fuzzifier_m,
                current_embedder=gen.embedder,
                current_version=gen.number,
                reason=reason,
            )
            new_gen = Generation(outcome.model.version, outcome.embedder, outcome.model)
            self._persist_generation(new_gen)
            self._gen = new_gen
        summary = outcome.summary.to_payload()
        self.monitor.audit({"event": "update", **summary})
        return summary

    def _spawn_update(self, reason: str) -> None:
        def work():
            try:
                self.force_update(reason=reason)
            except Exception as exc:
                self.monitor.audit({"event": "update-failed", "reason": reason,
                                    "error": str(exc)})

        threading.Thread(target=work, name="sigzoo-update", daemon=True).start()

    # -- introspection -----------------------------------------------------------------

    def export_embeddings(self):
        return self.store.export_embeddings()

    def status(self) -> dict:
        gen = self._gen
        hist = self.monitor.history
        return {
            "generation": gen.number,
            "embedder": None if gen.embedder is None else {
                "kind": gen.embedder.kind,
                "version": gen.embedder.version,
                "output_dim": gen.embedder.output_dim,
                "degenerate": gen.embedder.degenerate,
            },
            "cluster_model": None if gen.model is None else gen.model.summary(),
            "store": self.store.stats(),
            "zoo": self.zoo.stats(),
            "monitor": {
                "datasets_seen": hist.datasets_seen,
                "last_trigger_at": hist.last_trigger_at,
                "certainty_threshold": self.monitor.policy.certainty_threshold,
            },
            "kernel_backend": kernels.BACKEND,
            "update_running": self.lease._lock.locked(),
        }
