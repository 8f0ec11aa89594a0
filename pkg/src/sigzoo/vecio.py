"""Embedding file format, versioned binary blobs, canonical JSON.

Embedding files are little-endian binary: magic ``FDMS``, format version
(u32), count (u64), dim (u32), then count x dim float32 row-major. A JSON
sidecar manifest maps row index to sample id and source. The same
magic+version header convention, plus a kind tag, frames the persisted model
blobs.

``canonical_json`` is the one serializer used for every structured output
(API bodies, CLI stdout, digests): sorted keys, compact separators, ASCII.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DimMismatch, FormatError, NonFiniteValue

MAGIC = b"FDMS"
FORMAT_VERSION = 1

# Blob kinds sharing the magic+version header.
KIND_EMBEDDER = 2
KIND_CLUSTER_MODEL = 3

_HEADER = struct.Struct("<4sIQI")  # magic, version, count, dim


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def canonical_json_bytes(obj) -> bytes:
    return canonical_json(obj).encode("ascii")


def embeddings_to_bytes(vectors: np.ndarray) -> bytes:
    """Serialize an (n, d) float32 array to the embedding wire format."""
    arr = np.ascontiguousarray(vectors, dtype="<f4")
    if arr.ndim != 2:
        raise FormatError("embedding array must be 2-D", ndim=arr.ndim)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, arr.shape[0], arr.shape[1])
    return header + arr.tobytes()


def embeddings_from_bytes(buf: bytes) -> np.ndarray:
    """Parse the embedding wire format; FormatError names the bad byte offset."""
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header", offset=len(buf), expected=_HEADER.size)
    magic, version, count, dim = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError("bad magic", offset=0, magic=magic.hex())
    if version != FORMAT_VERSION:
        raise FormatError("unsupported format version", offset=4, version=version)
    if dim == 0:
        raise FormatError("zero dim", offset=16)
    need = _HEADER.size + count * dim * 4
    if len(buf) != need:
        # point at the start of the first missing/extra byte
        raise FormatError(
            "body length mismatch", offset=min(len(buf), need), expected=need, actual=len(buf)
        )
    flat = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size)
    return flat.reshape(count, dim).copy()


def write_embeddings(
    data_path: str | Path,
    ids: list[str],
    vectors: np.ndarray,
    sources: list[str] | None = None,
    manifest_path: str | Path | None = None,
) -> Path:
    """Write the binary file plus its sidecar manifest; returns manifest path."""
    data_path = Path(data_path)
    arr = np.ascontiguousarray(vectors, dtype="<f4")
    if arr.ndim != 2 or arr.shape[0] != len(ids):
        raise FormatError("ids/vectors shape disagree", ids=len(ids), rows=int(arr.shape[0]))
    if sources is None:
        sources = [""] * len(ids)
    data_path.write_bytes(embeddings_to_bytes(arr))
    manifest = {
        "format": "fdms-embeddings",
        "version": FORMAT_VERSION,
        "dim": int(arr.shape[1]),
        "count": int(arr.shape[0]),
        "data_file": data_path.name,
        "rows": [{"id": i, "source": s} for i, s in zip(ids, sources)],
    }
    mpath = Path(manifest_path) if manifest_path else data_path.with_suffix(data_path.suffix + ".json")
    mpath.write_text(canonical_json(manifest))
    return mpath


def read_manifest(manifest_path: str | Path) -> dict:
    mpath = Path(manifest_path)
    try:
        manifest = json.loads(mpath.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable manifest: {exc}", path=str(mpath))
    for key in ("dim", "count", "data_file", "rows"):
        if key not in manifest:
            raise FormatError(f"manifest missing key {key!r}", path=str(mpath))
    return manifest


def parse_embeddings_payload(manifest: dict, data: bytes) -> tuple[np.ndarray, list]:
    """Validate an in-memory (manifest, binary body) pair; returns the float32
    matrix and the manifest's row descriptors."""
    for key in ("dim", "count", "rows"):
        if key not in manifest:
            raise FormatError(f"manifest missing key {key!r}")
    arr = embeddings_from_bytes(data)
    rows = manifest["rows"]
    if arr.shape[0] != int(manifest["count"]) or len(rows) != arr.shape[0]:
        raise FormatError(
            "manifest count disagrees with data file",
            manifest_count=int(manifest["count"]),
            rows=len(rows),
            file_count=int(arr.shape[0]),
        )
    if arr.shape[1] != int(manifest["dim"]):
        raise DimMismatch(
            "manifest dim disagrees with data file",
            manifest_dim=int(manifest["dim"]),
            file_dim=int(arr.shape[1]),
        )
    bad = ~np.isfinite(arr)
    if bad.any():
        row = int(np.argwhere(bad.any(axis=1))[0][0])
        raise NonFiniteValue(
            "non-finite embedding value", sample_id=rows[row].get("id", ""), row=row
        )
    for row_no, row in enumerate(rows):
        if "id" not in row:
            raise FormatError("manifest row missing id", row=row_no)
    return arr, rows


def ingest_external_embeddings(manifest_path: str | Path) -> list[tuple[str, np.ndarray]]:
    """Load externally computed embeddings: (sample id, float32 vector) pairs.

    Validates the header, byte count, manifest agreement and finiteness.
    """
    mpath = Path(manifest_path)
    manifest = read_manifest(mpath)
    data_path = mpath.parent / manifest["data_file"]
    try:
        data = data_path.read_bytes()
    except OSError as exc:
        raise FormatError(f"unreadable data file: {exc}", path=str(data_path))
    arr, rows = parse_embeddings_payload(manifest, data)
    return [(r["id"], arr[i]) for i, r in enumerate(rows)]


def write_blob(path: str | Path, kind: int, payload: dict) -> None:
    """Persist a structured object under the shared binary header."""
    body = canonical_json_bytes(payload)
    head = struct.pack("<4sIIQ", MAGIC, FORMAT_VERSION, kind, len(body))
    Path(path).write_bytes(head + body)


def read_blob(path: str | Path, kind: int) -> dict:
    buf = Path(path).read_bytes()
    head = struct.Struct("<4sIIQ")
    if len(buf) < head.size:
        raise FormatError("truncated blob header", offset=len(buf), expected=head.size)
    magic, version, got_kind, length = head.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError("bad magic", offset=0, magic=magic.hex())
    if version != FORMAT_VERSION:
        raise FormatError("unsupported format version", offset=4, version=version)
    if got_kind != kind:
        raise FormatError("unexpected blob kind", offset=8, kind=got_kind, expected=kind)
    if len(buf) != head.size + length:
        raise FormatError(
            "blob length mismatch", offset=min(len(buf), head.size + length),
            expected=head.size + length, actual=len(buf),
        )
    return json.loads(buf[head.size:].decode("ascii"))
