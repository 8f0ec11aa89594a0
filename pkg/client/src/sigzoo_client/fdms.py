"""The binary embedding wire format, stdlib only.

Layout: a 20-byte little-endian header (magic ``FDMS``, format version,
row count as u64, dimension as u32) followed by float32 rows. Ids, labels,
and sources travel in a JSON sidecar manifest. This module packs and
unpacks that format byte-exactly; it does no arithmetic on the values.
"""

from __future__ import annotations

import base64
import math
import struct

MAGIC = b"FDMS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQI")


class FdmsFormatError(ValueError):
    pass


def pack_embeddings(rows) -> bytes:
    rows = [list(r) for r in rows]
    if not rows:
        raise FdmsFormatError("need at least one row")
    dim = len(rows[0])
    if dim == 0:
        raise FdmsFormatError("rows must be nonempty")
    packer = struct.Struct(f"<{dim}f")
    out = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(rows), dim)]
    for i, row in enumerate(rows):
        if len(row) != dim:
            raise FdmsFormatError(f"row {i} has {len(row)} values, expected {dim}")
        if not all(math.isfinite(x) for x in row):
            raise FdmsFormatError(f"row {i} contains a non-finite value")
        out.append(packer.pack(*row))
    return b"".join(out)


def unpack_embeddings(data: bytes) -> list:
    if len(data) < _HEADER.size:
        raise FdmsFormatError(f"truncated header: {len(data)} bytes")
    magic, version, count, dim = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FdmsFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FdmsFormatError(f"unsupported format version {version}")
    if dim == 0:
        raise FdmsFormatError("zero dim")
    need = _HEADER.size + count * dim * 4
    if len(data) != need:
        raise FdmsFormatError(f"body length {len(data)}, expected {need}")
    packer = struct.Struct(f"<{dim}f")
    return [list(packer.unpack_from(data, _HEADER.size + i * packer.size))
            for i in range(count)]


def manifest_for(ids, dim, labels=None, sources=None, label_schemas=None,
                 data_file: str = "upload.fdms") -> dict:
    """Sidecar manifest for a packed payload. ``labels`` are raw bytes and
    get base64-encoded here; they are required for ingest, not for queries."""
    rows = []
    for i, sample_id in enumerate(ids):
        row = {"id": sample_id, "source": sources[i] if sources else ""}
        if labels is not None:
            row["label"] = base64.b64encode(labels[i]).decode("ascii")
        if label_schemas is not None:
            row["label_schema"] = label_schemas[i]
        rows.append(row)
    return {
        "format": "fdms-embeddings",
        "version": FORMAT_VERSION,
        "dim": int(dim),
        "count": len(rows),
        "data_file": data_file,
        "rows": rows,
    }
