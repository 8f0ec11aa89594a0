"""Durable store of labeled records, indexed per cluster.

Layout on disk: an append-only record log (length-prefixed, CRC-guarded
frames; a commit frame seals each batch) plus an index sidecar holding the
cluster id per row, regenerated whenever it is missing or stale. Recovery
truncates the log back to the last commit, so a crash mid-batch never
surfaces a partial batch.

In memory the store is columnar. Readers grab an immutable snapshot (one
attribute read) and never block: inserts append past the snapshot's row
count, upserts and reindexes copy the arrays they change and publish a new
snapshot by swapping one reference. A response built from one snapshot is
therefore consistent with exactly one index version by construction.
"""

from __future__ import annotations

import base64
import os
import struct
import threading
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import clustering, kernels, vecio
from .clustering import ClusterModel
from .errors import (
    DimMismatch,
    DuplicateId,
    EmptyInput,
    EmptyStore,
    InsufficientData,
    KMismatch,
    NotInitialized,
    StorageFailure,
    VersionMismatch,
)

LOG_NAME = "records.log"
INDEX_NAME = "cluster.idx"

FRAME_RECORD = 1
FRAME_COMMIT = 2

_FRAME_HEAD = struct.Struct("<BI")  # type, payload length
_CRC = struct.Struct("<I")
_COMMIT_PAYLOAD = struct.Struct("<Q")  # cumulative record count
_IDX_HEAD = struct.Struct("<4sIIIQ")  # magic, fmt version, kind, model version, rows

KIND_INDEX = 4


@dataclass(eq=False)
class DataRecord:
    """One labeled sample. ``embedding`` may be None only when ``raw`` is
    retained; such rows stay out of the index until a system update embeds
    them."""

    sample_id: str
    embedding: np.ndarray | None
    label: bytes
    label_schema: str = ""
    source: str = ""
    ingested_at: float = 0.0
    raw: np.ndarray | None = None
    cluster_id: int = -1
    cluster_model_version: int = 0

    def to_payload(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "embedding": None if self.embedding is None
            else [float(x) for x in self.embedding],
            "label": base64.b64encode(self.label).decode("ascii"),
            "label_schema": self.label_schema,
            "source": self.source,
            "ingested_at": self.ingested_at,
            "cluster_id": self.cluster_id,
            "cluster_model_version": self.cluster_model_version,
        }


@dataclass(frozen=True)
class LookupResult:
    records: list
    requested_count: int
    per_cluster_counts: tuple
    rng_seed: int

    def to_payload(self) -> dict:
        return {
            "requested_count": self.requested_count,
            "per_cluster_counts": list(self.per_cluster_counts),
            "rng_seed": self.rng_seed,
            "records": [r.to_payload() for r in self.records],
        }


@dataclass(frozen=True)
class PseudoLabelOutcome:
    sample_id: str
    decision: str  # "reused" | "needs-labeling"
    matched_record: DataRecord | None
    distance: float

    def to_payload(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "decision": self.decision,
            "matched_record": None if self.matched_record is None
            else self.matched_record.to_payload(),
            "distance": self.distance,
        }


def largest_remainder(weights: np.ndarray, n: int) -> np.ndarray:
    """Apportion n seats over nonnegative weights; ties to the lowest index."""
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0 or n == 0:
        out = np.zeros(len(w), dtype=np.int64)
        return out
    quota = w / total * n
    base = np.floor(quota).astype(np.int64)
    left = n - int(base.sum())
    if left > 0:
        order = np.argsort(-(quota - base), kind="stable")
        base[order[:left]] += 1
    return base


def apportion_with_capacity(weights: np.ndarray, n: int, caps: np.ndarray) -> np.ndarray:
    """Largest-remainder targets, redistributing any over-capacity shortfall
    over the clusters that still have spare room (their weights if any are
    positive, else their spare capacities)."""
    caps = np.asarray(caps, dtype=np.int64)
    targets = np.zeros(len(caps), dtype=np.int64)
    remaining = n
    while remaining > 0:
        spare = caps - targets
        active = spare > 0
        w = np.where(active, weights, 0.0)
        if w.sum() <= 0:
            w = np.where(active, spare.astype(np.float64), 0.0)
        step = largest_remainder(w, remaining)
        step = np.minimum(step, spare)
        got = int(step.sum())
        if got == 0:
            raise InsufficientData(
                "store cannot satisfy the requested count", requested=n,
                capacity=int(caps.sum()),
            )
        targets += step
        remaining -= got
    return targets


# -- log frame codec ---------------------------------------------------------


def _encode_record(rec: DataRecord) -> bytes:
    parts = []
    ident = rec.sample_id.encode("utf-8")
    parts.append(struct.pack("<I", len(ident)))
    parts.append(ident)
    if rec.embedding is None:
        parts.append(struct.pack("<I", 0))
    else:
        emb = np.ascontiguousarray(rec.embedding, dtype="<f4")
        parts.append(struct.pack("<I", emb.shape[0]))
        parts.append(emb.tobytes())
    if rec.raw is None:
        parts.append(b"\x00")
    else:
        raw = np.ascontiguousarray(rec.raw, dtype="<f8")
        parts.append(b"\x01")
        parts.append(struct.pack("<I", raw.ndim))
        parts.append(struct.pack(f"<{raw.ndim}I", *raw.shape))
        parts.append(raw.tobytes())
    for text in (rec.label_schema, rec.source):
        enc = text.encode("utf-8")
        parts.append(struct.pack("<I", len(enc)))
        parts.append(enc)
    parts.append(struct.pack("<I", len(rec.label)))
    parts.append(rec.label)
    parts.append(struct.pack("<d", rec.ingested_at))
    return b"".join(parts)


def _decode_record(buf: bytes) -> DataRecord:
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        chunk = buf[off:off + n]
        if len(chunk) != n:
            raise ValueError("short record payload")
        off += n
        return chunk

    id_len = struct.unpack("<I", take(4))[0]
    sample_id = take(id_len).decode("utf-8")
    dim = struct.unpack("<I", take(4))[0]
    embedding = None
    if dim:
        embedding = np.frombuffer(take(dim * 4), dtype="<f4").copy()
    raw = None
    if take(1) == b"\x01":
        ndim = struct.unpack("<I", take(4))[0]
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        raw = np.frombuffer(take(size * 8), dtype="<f8").reshape(shape).copy()
    schema_len = struct.unpack("<I", take(4))[0]
    label_schema = take(schema_len).decode("utf-8")
    source_len = struct.unpack("<I", take(4))[0]
    source = take(source_len).decode("utf-8")
    label_len = struct.unpack("<I", take(4))[0]
    label = take(label_len)
    ingested_at = struct.unpack("<d", take(8))[0]
    if off != len(buf):
        raise ValueError("trailing bytes in record payload")
    return DataRecord(
        sample_id=sample_id, embedding=embedding, label=label,
        label_schema=label_schema, source=source, ingested_at=ingested_at, raw=raw,
    )


def _frame(frame_type: int, payload: bytes) -> bytes:
    return _FRAME_HEAD.pack(frame_type, len(payload)) + payload + _CRC.pack(
        zlib.crc32(payload)
    )


def _replay_log(path: Path) -> tuple[list[DataRecord], int]:
    """Parse (records up to the last commit, byte offset of that commit's end).

    Anything after the last intact commit frame — garbage, a torn frame, or
    complete-but-uncommitted records — is ignored.
    """
    records: list[DataRecord] = []
    committed = 0
    committed_end = 0
    if not path.exists():
        return records, committed_end
    buf = path.read_bytes()
    pos = 0
    pending: list[DataRecord] = []
    while pos + _FRAME_HEAD.size <= len(buf):
        ftype, plen = _FRAME_HEAD.unpack_from(buf, pos)
        end = pos + _FRAME_HEAD.size + plen + _CRC.size
        if ftype not in (FRAME_RECORD, FRAME_COMMIT) or end > len(buf):
            break
        payload = buf[pos + _FRAME_HEAD.size:end - _CRC.size]
        (crc,) = _CRC.unpack_from(buf, end - _CRC.size)
        if zlib.crc32(payload) != crc:
            break
        if ftype == FRAME_RECORD:
            try:
                pending.append(_decode_record(payload))
            except (ValueError, UnicodeDecodeError):
                break
        else:
            (total,) = _COMMIT_PAYLOAD.unpack(payload)
            if total != committed + len(pending):
                break
            records.extend(pending)
            pending.clear()
            committed = total
            committed_end = end
        pos = end
    return records, committed_end


# -- snapshot ----------------------------------------------------------------


@dataclass(frozen=True)
class StoreSnapshot:
    """Immutable view; every field is stable for the snapshot's lifetime."""

    count: int
    dim: int | None
    version: int
    model: ClusterModel | None
    emb: np.ndarray | None
    cluster_ids: np.ndarray | None
    alive: np.ndarray
    pending: np.ndarray
    per_cluster: dict | None
    ids: list
    labels: list
    schemas: list
    sources: list
    ingested: list
    raws: list
    live_indexed: int

    def record(self, row: int) -> DataRecord:
        emb = None
        if self.emb is not None and not self.pending[row]:
            emb = self.emb[row].copy()
        return DataRecord(
            sample_id=self.ids[row],
            embedding=emb,
            label=self.labels[row],
            label_schema=self.schemas[row],
            source=self.sources[row],
            ingested_at=self.ingested[row],
            raw=self.raws[row],
            cluster_id=int(self.cluster_ids[row]) if self.cluster_ids is not None else -1,
            cluster_model_version=self.version,
        )

    def live_rows(self) -> np.ndarray:
        return np.flatnonzero(self.alive[: self.count])

    def cluster_histogram(self) -> list:
        k = self.model.k if self.model is not None else 0
        if self.per_cluster is None:
            return [0] * k
        return [int(len(self.per_cluster.get(c, ()))) for c in range(k)]


class DataStore:
    """Open with :meth:`open`; one writer at a time, any number of readers."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._log_path = self.directory / LOG_NAME
        self._idx_path = self.directory / INDEX_NAME
        self._write_lock = threading.Lock()
        self._audit: list[dict] = []

        self._ids: list[str] = []
        self._labels: list[bytes] = []
        self._schemas: list[str] = []
        self._sources: list[str] = []
        self._ingested: list[float] = []
        self._raws: list = []
        self._emb: np.ndarray | None = None
        self._cluster_ids: np.ndarray | None = None
        self._alive = np.zeros(0, dtype=bool)
        self._pending = np.zeros(0, dtype=bool)
        self._id_to_row: dict[str, int] = {}
        self._dim: int | None = None
        self._count = 0
        self._log_records = 0  # cumulative frames on disk, superseded rows included
        self._snap: StoreSnapshot = self._build_snapshot(0, None, None)

    # -- lifecycle -----------------------------------------------------------

    @classmethod
    def open(cls, directory: str | Path, model: ClusterModel | None = None) -> "DataStore":
        """Replay the log (truncating past the last commit), then adopt the
        index sidecar when it matches, else fall back to reindexing if a
        model was supplied."""
        store = cls(directory)
        records, committed_end = _replay_log(store._log_path)
        if store._log_path.exists() and store._log_path.stat().st_size > committed_end:
            with open(store._log_path, "r+b") as f:
                f.truncate(committed_end)
        if records:
            store._apply_rows(records)
        cluster_ids, idx_version = store._read_index(len(store._ids))
        if cluster_ids is not None and (model is None or model.version == idx_version):
            store._cluster_ids = cluster_ids
            per_cluster = store._build_per_cluster(cluster_ids)
            store._publish(idx_version, model, per_cluster)
        elif model is not None and store._dim in (None, model.dim):
            store._publish(0, None, None)
            store.reindex(model)
        else:
            store._publish(0, None, None)
        return store

    def _read_index(self, expect_rows: int):
        if not self._idx_path.exists():
            return None, 0
        try:
            buf = self._idx_path.read_bytes()
            magic, fmt, kind, model_version, rows = _IDX_HEAD.unpack_from(buf, 0)
            if (
                magic != vecio.MAGIC or fmt != vecio.FORMAT_VERSION
                or kind != KIND_INDEX or rows != expect_rows
                or len(buf) != _IDX_HEAD.size + rows * 4
            ):
                return None, 0
            ids = np.frombuffer(buf, dtype="<i4", offset=_IDX_HEAD.size).astype(np.int64)
            return ids, int(model_version)
        except (OSError, struct.error):
            return None, 0

    def _write_index(self, cluster_ids: np.ndarray, version: int) -> None:
        head = _IDX_HEAD.pack(
            vecio.MAGIC, vecio.FORMAT_VERSION, KIND_INDEX, version, len(cluster_ids)
        )
        tmp = self._idx_path.with_suffix(".tmp")
        tmp.write_bytes(head + cluster_ids.astype("<i4").tobytes())
        os.replace(tmp, self._idx_path)

    # -- snapshot plumbing ----------------------------------------------------

    @property
    def snapshot(self) -> StoreSnapshot:
        return self._snap

    def _build_snapshot(self, version, model, per_cluster) -> StoreSnapshot:
        live_indexed = 0
        if per_cluster is not None:
            live_indexed = sum(len(v) for v in per_cluster.values())
        return StoreSnapshot(
            count=self._count,
            dim=self._dim,
            version=version,
            model=model,
            emb=self._emb,
            cluster_ids=self._cluster_ids,
            alive=self._alive,
            pending=self._pending,
            per_cluster=per_cluster,
            ids=self._ids,
            labels=self._labels,
            schemas=self._schemas,
            sources=self._sources,
            ingested=self._ingested,
            raws=self._raws,
            live_indexed=live_indexed,
        )

    def _publish(self, version, model, per_cluster) -> None:
        self._snap = self._build_snapshot(version, model, per_cluster)

    def _build_per_cluster(self, cluster_ids: np.ndarray) -> dict:
        live = self._alive[: self._count] & ~self._pending[: self._count]
        out: dict = {}
        kept = np.flatnonzero(live)
        for c in np.unique(cluster_ids[kept]):
            if c < 0:
                continue
            out[int(c)] = kept[cluster_ids[kept] == c]
        return out

    # -- ingest ---------------------------------------------------------------

    def _ensure_emb_capacity(self, extra: int, dim: int) -> None:
        if self._emb is None:
            cap = max(1024, self._count + extra)
            fresh = np.full((cap, dim), np.nan, dtype=np.float32)
            self._emb = fresh
            grown = np.zeros(cap, dtype=np.int64)
            grown[: self._count] = -1
            self._cluster_ids = grown if self._cluster_ids is None else self._cluster_ids
            self._dim = dim
        need = self._count + extra
        if need > self._emb.shape[0]:
            cap = max(need, self._emb.shape[0] * 2)
            fresh = np.full((cap, self._dim), np.nan, dtype=np.float32)
            fresh[: self._count] = self._emb[: self._count]
            self._emb = fresh
        if self._cluster_ids is None or need > self._cluster_ids.shape[0]:
            cap = max(need, 1024 if self._cluster_ids is None else self._cluster_ids.shape[0] * 2)
            fresh_ids = np.full(cap, -1, dtype=np.int64)
            if self._cluster_ids is not None:
                fresh_ids[: self._count] = self._cluster_ids[: self._count]
            self._cluster_ids = fresh_ids
        for name in ("_alive", "_pending"):
            arr = getattr(self, name)
            if need > arr.shape[0]:
                cap = max(need, max(1024, arr.shape[0] * 2))
                fresh_mask = np.zeros(cap, dtype=bool)
                fresh_mask[: self._count] = arr[: self._count]
                setattr(self, name, fresh_mask)

    def _validate_batch(self, records: list) -> None:
        if not records:
            raise EmptyInput("empty insert batch")
        seen = set()
        for rec in records:
            if rec.sample_id in seen:
                raise DuplicateId("duplicate sample_id within batch", sample_id=rec.sample_id)
            seen.add(rec.sample_id)
            if not rec.label:
                raise EmptyInput("label payload must be nonempty", sample_id=rec.sample_id)
            if rec.embedding is None:
                if rec.raw is None:
                    raise EmptyInput(
                        "record carries neither embedding nor raw payload",
                        sample_id=rec.sample_id,
                    )
                continue
            emb = np.asarray(rec.embedding)
            if emb.ndim != 1:
                raise DimMismatch("embedding must be a vector", sample_id=rec.sample_id)
            if self._dim is not None and emb.shape[0] != self._dim:
                raise DimMismatch(
                    "embedding dim does not match the store",
                    expected=self._dim, got=int(emb.shape[0]), sample_id=rec.sample_id,
                )
            if not np.isfinite(emb).all():
                raise DimMismatch("embedding has non-finite values", sample_id=rec.sample_id)

    def insert(self, records: list) -> int:
        """Durably append a batch; memory state changes only after the commit
        frame reaches disk, so readers never see a partial batch."""
        with self._write_lock:
            self._validate_batch(records)
            now = time.time()
            for rec in records:
                if rec.ingested_at == 0.0:
                    rec.ingested_at = now
            payload = bytearray()
            for rec in records:
                payload += _frame(FRAME_RECORD, _encode_record(rec))
            committed_records = self._committed_records() + len(records)
            payload += _frame(FRAME_COMMIT, _COMMIT_PAYLOAD.pack(committed_records))
            try:
                with open(self._log_path, "ab") as f:
                    f.write(payload)
                    f.flush()
                    os.fsync(f.fileno())
            except OSError as exc:
                raise StorageFailure(f"log append failed: {exc}")
            snap = self._snap
            start = self._count
            self._apply_rows(records)
            if snap.model is not None:
                # index as we write: fresh embedded rows join their clusters now
                rows = np.arange(start, self._count)
                fresh = rows[~self._pending[rows]]
                if fresh.size:
                    labels, _ = clustering.assign_batch(
                        snap.model, self._emb[fresh].astype(np.float64)
                    )
                    self._cluster_ids[fresh] = labels
            if snap.per_cluster is not None:
                per_cluster = self._build_per_cluster(self._cluster_ids[: self._count])
                try:
                    self._write_index(self._cluster_ids[: self._count], snap.version)
                except OSError:
                    pass  # sidecar is a cache; reopen rebuilds it from the model
            else:
                per_cluster = None
            self._publish(snap.version, snap.model, per_cluster)
            return len(records)

    def _committed_records(self) -> int:
        return self._log_records

    def _apply_rows(self, records: list) -> None:
        dim = self._dim
        if dim is None:
            for rec in records:
                if rec.embedding is not None:
                    dim = int(np.asarray(rec.embedding).shape[0])
                    break
        if dim is not None:
            self._ensure_emb_capacity(len(records), dim)
        else:
            # no embedding anywhere yet: grow the masks only
            need = self._count + len(records)
            for name in ("_alive", "_pending"):
                arr = getattr(self, name)
                if need > arr.shape[0]:
                    cap = max(need, max(1024, arr.shape[0] * 2))
                    fresh = np.zeros(cap, dtype=bool)
                    fresh[: self._count] = arr[: self._count]
                    setattr(self, name, fresh)

        upserts = [r for r in records if r.sample_id in self._id_to_row]
        if upserts:
            # masks are shared with live snapshots: copy before flipping bits
            self._alive = self._alive.copy()
            self._pending = self._pending.copy()
        for rec in records:
            row = self._count
            prior = self._id_to_row.get(rec.sample_id)
            if prior is not None:
                self._alive[prior] = False
                self._audit.append(
                    {"sample_id": rec.sample_id, "replaced_row": prior, "at": rec.ingested_at}
                )
            self._ids.append(rec.sample_id)
            self._labels.append(rec.label)
            self._schemas.append(rec.label_schema)
            self._sources.append(rec.source)
            self._ingested.append(rec.ingested_at)
            self._raws.append(None if rec.raw is None else np.asarray(rec.raw, dtype=np.float64))
            if rec.embedding is not None:
                self._emb[row] = np.asarray(rec.embedding, dtype=np.float32)
                self._pending[row] = False
            else:
                if self._emb is not None:
                    self._emb[row] = np.nan
                self._pending[row] = True
            if self._cluster_ids is not None:
                self._cluster_ids[row] = -1
            self._alive[row] = True
            self._id_to_row[rec.sample_id] = row
            self._count += 1
        self._log_records = self._committed_records() + len(records)

    # -- index maintenance ----------------------------------------------------

    def reindex(self, model: ClusterModel) -> dict:
        """Recompute every live row's cluster under ``model``; atomic swap."""
        with self._write_lock:
            snap = self._snap
            if model.version <= snap.version:
                raise VersionMismatch(
                    "reindex requires a newer model version",
                    current=snap.version, offered=model.version,
                )
            if self._dim is not None and model.dim != self._dim:
                raise DimMismatch(
                    "model dim does not match the store", store=self._dim, model=model.dim
                )
            count = self._count
            new_ids = np.full(max(count, 1), -1, dtype=np.int64)
            live = self._alive[:count] & ~self._pending[:count]
            rows = np.flatnonzero(live)
            if rows.size:
                labels, _ = clustering.assign_batch(
                    model, self._emb[rows].astype(np.float64)
                )
                new_ids_view = new_ids[:count]
                new_ids_view[rows] = labels
            old = self._cluster_ids[:count] if self._cluster_ids is not None else np.full(count, -1)
            changed = int((new_ids[:count][rows] != old[rows]).sum()) if rows.size else 0
            try:
                self._write_index(new_ids[:count], model.version)
            except OSError as exc:
                raise StorageFailure(f"index write failed: {exc}")
            self._cluster_ids = new_ids
            per_cluster = self._build_per_cluster(new_ids[:count])
            self._publish(model.version, model, per_cluster)
            return {"total": int(rows.size), "changed": changed, "version": model.version}

    # -- queries --------------------------------------------------------------

    def lookup_by_distribution(self, pdf, n: int, seed: int) -> LookupResult:
        snap = self._snap
        if snap.per_cluster is None or snap.model is None:
            raise VersionMismatch("store has no cluster index yet", store_version=snap.version)
        if pdf.cluster_model_version != snap.version:
            raise VersionMismatch(
                "distribution version does not match the store index",
                pdf_version=pdf.cluster_model_version, store_version=snap.version,
            )
        if pdf.k != snap.model.k:
            raise KMismatch("distribution k does not match the model", pdf_k=pdf.k, k=snap.model.k)
        if n < 1:
            raise InsufficientData("requested count must be >= 1", requested=n)
        caps = np.array(
            [len(snap.per_cluster.get(c, ())) for c in range(snap.model.k)], dtype=np.int64
        )
        if int(caps.sum()) < n:
            raise InsufficientData(
                "store holds fewer records than requested",
                requested=n, available=int(caps.sum()),
            )
        targets = apportion_with_capacity(pdf.probs, n, caps)
        rng = np.random.default_rng(seed)
        chosen: list[int] = []
        for c in range(snap.model.k):
            t = int(targets[c])
            if t == 0:
                continue
            rows = snap.per_cluster[c]
            pick = rng.choice(rows, size=t, replace=False)
            chosen.extend(int(r) for r in np.sort(pick))
        records = [snap.record(r) for r in chosen]
        return LookupResult(
            records=records,
            requested_count=n,
            per_cluster_counts=tuple(int(t) for t in targets),
            rng_seed=seed,
        )

    def pseudo_label(self, v: np.ndarray, threshold_t: float) -> PseudoLabelOutcome:
        """Nearest stored record, in-cluster first with exhaustive fallback;
        the label is reused only when the final distance is strictly below T."""
        snap = self._snap
        if snap.model is None:
            raise NotInitialized("store has no cluster model yet")
        if snap.live_indexed == 0:
            raise EmptyStore("no indexed records to match against")
        arr = np.asarray(v, dtype=np.float64)
        if arr.shape != (snap.model.dim,):
            raise DimMismatch("query dim does not match", expected=snap.model.dim, got=list(arr.shape))

        def nearest(rows: np.ndarray) -> tuple[int, float]:
            pts = (snap.emb[rows].astype(np.float64) - snap.model.feature_mean) / snap.model.feature_scale
            q = (arr - snap.model.feature_mean) / snap.model.feature_scale
            d2 = kernels.sqdist(np.ascontiguousarray(pts), np.ascontiguousarray(q[None, :]))[:, 0]
            best = int(np.argmin(d2))
            return int(rows[best]), float(np.sqrt(d2[best]))

        cluster = int(clustering.assign_batch(snap.model, arr[None, :])[0][0])
        rows = snap.per_cluster.get(cluster)
        best_row, best_dist = (-1, np.inf) if rows is None or not len(rows) else nearest(rows)
        if best_dist >= threshold_t:
            all_rows = np.flatnonzero(
                snap.alive[: snap.count] & ~snap.pending[: snap.count]
                & (snap.cluster_ids[: snap.count] >= 0)
            )
            best_row, best_dist = nearest(all_rows)
        if best_dist < threshold_t:
            return PseudoLabelOutcome(
                sample_id="", decision="reused",
                matched_record=snap.record(best_row), distance=best_dist,
            )
        return PseudoLabelOutcome(
            sample_id="", decision="needs-labeling", matched_record=None, distance=best_dist
        )

    def embeddings_for_ids(self, sample_ids: list) -> tuple[np.ndarray, list]:
        """Float32 embeddings of the latest live rows for the given ids;
        returns (array, missing ids). Pending/dead rows count as missing."""
        snap = self._snap
        rows = []
        missing = []
        lookup = {snap.ids[r]: r for r in snap.live_rows()}
        for sid in sample_ids:
            row = lookup.get(sid)
            if row is None or snap.pending[row]:
                missing.append(sid)
            else:
                rows.append(row)
        if not rows:
            return np.zeros((0, snap.dim or 0), dtype=np.float32), missing
        return snap.emb[np.array(rows, dtype=np.int64)].copy(), missing

    def export_embeddings(self) -> tuple[list, np.ndarray, list]:
        """(ids, float32 matrix, sources) of live indexed rows in row order."""
        snap = self._snap
        rows = [r for r in snap.live_rows() if not snap.pending[r]]
        if not rows:
            return [], np.zeros((0, snap.dim or 0), dtype=np.float32), []
        idx = np.array(rows, dtype=np.int64)
        return (
            [snap.ids[r] for r in rows],
            snap.emb[idx].copy(),
            [snap.sources[r] for r in rows],
        )

    def pending_rows(self) -> list:
        """Rows awaiting embedding (raw retained, not yet indexed)."""
        snap = self._snap
        return [int(r) for r in np.flatnonzero(snap.alive[: snap.count] & snap.pending[: snap.count])]

    def stats(self) -> dict:
        snap = self._snap
        live = snap.live_rows()
        pending = int(snap.pending[live].sum()) if live.size else 0
        disk = 0
        for p in (self._log_path, self._idx_path):
            if p.exists():
                disk += p.stat().st_size
        return {
            "records": int(live.size),
            "pending": pending,
            "superseded": int(snap.count - live.size),
            "audit_entries": len(self._audit),
            "store_version": snap.version,
            "dim": snap.dim,
            "per_cluster": snap.cluster_histogram(),
            "disk_bytes": disk,
        }
