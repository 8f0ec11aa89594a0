"""HTTP face of the service.

Handlers parse requests by hand and answer with the same canonical JSON
serializer the CLI uses, so the two surfaces emit byte-identical structured
output for the same logical call. Binary embedding uploads put the FDMS
bytes in the request body and the sidecar manifest in a header.
"""

from __future__ import annotations

import base64
import json

import numpy as np
from fastapi import FastAPI, Request, Response

from .errors import FormatError, SigzooError
from .service import QUERY_OPS, SigzooService, records_from_payload
from .vecio import canonical_json, embeddings_to_bytes, parse_embeddings_payload

MANIFEST_HEADER = "X-FDMS-Manifest"


def _json_response(payload: dict, status: int = 200) -> Response:
    return Response(
        content=canonical_json(payload), status_code=status, media_type="application/json"
    )


async def _read_json(request: Request) -> dict:
    body = await request.body()
    if not body:
        return {}
    try:
        payload = json.loads(body)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid json body: {exc}")
    if not isinstance(payload, dict):
        raise FormatError("body must be a json object")
    return payload


def _manifest_from_header(request: Request) -> dict:
    header = request.headers.get(MANIFEST_HEADER)
    if not header:
        raise FormatError(
            "binary upload requires a manifest header", header=MANIFEST_HEADER
        )
    try:
        manifest = json.loads(header)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid manifest header: {exc}")
    if not isinstance(manifest, dict):
        raise FormatError("manifest header must be a json object")
    return manifest


def _decode_label(text: str, row_ref: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (ValueError, TypeError):
        raise FormatError("label must be base64", sample_id=row_ref)


def _is_binary(request: Request) -> bool:
    return request.headers.get("content-type", "").startswith("application/octet-stream")


def create_app(service: SigzooService) -> FastAPI:
    app = FastAPI(title="sigzoo", docs_url=None, redoc_url=None, openapi_url=None)
    max_bytes = service.config.max_request_mb * 1024 * 1024

    @app.exception_handler(SigzooError)
    async def on_sigzoo_error(_request, exc: SigzooError):
        return _json_response(exc.to_dict(), status=exc.http_status)

    @app.middleware("http")
    async def cap_request_size(request: Request, call_next):
        length = request.headers.get("content-length")
        if length and length.isdigit() and int(length) > max_bytes:
            return _json_response(
                {
                    "error": "request-too-large",
                    "message": "request body exceeds the configured cap",
                    "details": {"limit_bytes": max_bytes, "got_bytes": int(length)},
                },
                status=413,
            )
        return await call_next(request)

    @app.post("/v1/query")
    async def query(request: Request, dataset_id: str = "", ops: str = "",
                    n: int | None = None, seed: int | None = None):
        if _is_binary(request):
            manifest = _manifest_from_header(request)
            arr, _rows = parse_embeddings_payload(manifest, await request.body())
            samples = {"embeddings": arr.astype(np.float64)}
            chosen = tuple(s for s in ops.split(",") if s) if ops else QUERY_OPS
        else:
            payload = await _read_json(request)
            dataset_id = payload.get("dataset_id", dataset_id)
            samples = payload.get("samples")
            if not isinstance(samples, dict):
                raise FormatError("body needs a samples object")
            chosen = tuple(payload.get("ops", list(QUERY_OPS)))
            n = payload.get("n", n)
            seed = payload.get("seed", seed)
        result = service.handle_query(
            dataset_id, samples, ops=chosen, n_override=n, seed=seed
        )
        return _json_response(result)

    @app.post("/v1/data")
    async def ingest(request: Request):
        if _is_binary(request):
            manifest = _manifest_from_header(request)
            arr, rows = parse_embeddings_payload(manifest, await request.body())
            labels = []
            schemas = []
            sources = []
            for row in rows:
                label_text = row.get("label")
                if label_text is None:
                    raise FormatError(
                        "binary ingest rows need a base64 label", sample_id=row["id"]
                    )
                labels.append(_decode_label(label_text, row["id"]))
                schemas.append(row.get("label_schema", ""))
                sources.append(row.get("source", ""))
            result = service.ingest_embeddings(
                [row["id"] for row in rows], arr, sources, labels, schemas
            )
            return _json_response(result)
        payload = await _read_json(request)
        entries = payload.get("records")
        if not isinstance(entries, list) or not entries:
            raise FormatError("body needs a nonempty records list")
        for entry in entries:
            entry["label"] = _decode_label(
                entry.get("label", ""), entry.get("sample_id", "?")
            )
        return _json_response(service.ingest(records_from_payload(entries)))

    @app.get("/v1/data/export")
    async def export(part: str = "data"):
        ids, vectors, sources = service.export_embeddings()
        if part == "manifest":
            manifest = {
                "format": "fdms-embeddings",
                "version": 1,
                "dim": int(vectors.shape[1]) if vectors.size else 0,
                "count": len(ids),
                "data_file": "export.fdms",
                "rows": [{"id": i, "source": s} for i, s in zip(ids, sources)],
            }
            return _json_response(manifest)
        return Response(
            content=embeddings_to_bytes(vectors), media_type="application/octet-stream"
        )

    @app.post("/v1/models")
    async def register(request: Request):
        payload = await _read_json(request)
        model_id = payload.get("model_id")
        if not model_id:
            raise FormatError("model_id is required")
        distribution = payload.get("distribution")
        if not isinstance(distribution, dict):
            raise FormatError("distribution payload is required")
        artifact = payload.get("artifact")
        blob = None
        if artifact is not None:
            blob = _decode_label(artifact, model_id)
        result = service.register_model(
            model_id,
            distribution,
            artifact=blob,
            artifact_uri=payload.get("artifact_uri", ""),
            content_hash=payload.get("content_hash", ""),
            metadata=payload.get("metadata"),
            training_ref=tuple(payload.get("training_ref", ())),
        )
        return _json_response(result)

    @app.get("/v1/models/rank")
    async def rank(dataset: str = ""):
        if not dataset:
            raise FormatError("dataset query parameter is required")
        return _json_response(service.rank_models(dataset))

    @app.post("/v1/admin/update")
    async def update(request: Request):
        payload = await _read_json(request)
        return _json_response(service.force_update(reason=payload.get("reason", "manual")))

    @app.get("/v1/status")
    async def status():
        return _json_response(service.status())

    return app
