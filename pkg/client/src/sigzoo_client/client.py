"""The client proper: thin, typed, no numerics.

Every method maps one-to-one onto a server route and returns the parsed
response body. All math stays server-side; this class moves bytes, encodes
labels, and turns error answers into typed exceptions. Instances are safe
for concurrent calls and usable as context managers.
"""

from __future__ import annotations

import base64
import json
import time
from pathlib import Path

import httpx

from .config import ClientConfig
from .errors import ConnectionFailed, ServerError, error_from_payload

MANIFEST_HEADER = "X-FDMS-Manifest"
_BINARY = {"content-type": "application/octet-stream"}


class SigzooClient:
    def __init__(self, config: ClientConfig | str):
        if isinstance(config, str):
            config = ClientConfig(base_url=config)
        self.config = config
        self._http = httpx.Client(base_url=config.base_url, timeout=config.timeout)

    # -- plumbing ---------------------------------------------------------------

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "SigzooClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _request(self, method: str, path: str, *, params=None, json_body=None,
                 content=None, headers=None):
        """Send with retries on transport failures and unstructured 5xx; a
        structured server error surfaces immediately as a typed exception."""
        cfg = self.config
        body = None if json_body is None else json.dumps(json_body)
        send_headers = dict(headers or {})
        if body is not None:
            send_headers["content-type"] = "application/json"
        failure = None
        for attempt in range(1, cfg.max_attempts + 1):
            try:
                resp = self._http.request(method, path, params=params,
                                          content=body if body is not None else content,
                                          headers=send_headers)
            except httpx.TransportError as exc:
                failure = exc
            else:
                payload = _parse_body(resp)
                if resp.status_code < 400:
                    return payload
                if isinstance(payload, dict) and "error" in payload:
                    raise error_from_payload(resp.status_code, payload)
                if resp.status_code < 500:
                    raise error_from_payload(
                        resp.status_code,
                        {"error": "format-error",
                         "message": f"unstructured {resp.status_code} answer"},
                    )
                failure = ServerError(
                    f"http-{resp.status_code}",
                    f"server returned {resp.status_code} without a structured error",
                    resp.status_code, {},
                )
            if attempt < cfg.max_attempts:
                delay = cfg.backoff_for(attempt)
                if delay:
                    time.sleep(delay)
        if isinstance(failure, ServerError):
            raise failure
        raise ConnectionFailed(str(failure), attempts=cfg.max_attempts) from failure

    # -- queries ------------------------------------------------------------------

    def query(self, samples: dict, *, dataset_id: str = "", ops=None,
              n: int | None = None, seed: int | None = None) -> dict:
        """POST /v1/query with an inline samples object
        (``{"embeddings": [[...]]}`` or ``{"raw": [...]}``)."""
        payload = {"dataset_id": dataset_id, "samples": samples}
        if ops is not None:
            payload["ops"] = list(ops)
        if n is not None:
            payload["n"] = n
        seed = seed if seed is not None else self.config.default_seed
        if seed is not None:
            payload["seed"] = seed
        return self._request("POST", "/v1/query", json_body=payload)

    def query_binary(self, data: bytes, manifest: dict, *, dataset_id: str = "",
                     ops=None, n: int | None = None, seed: int | None = None) -> dict:
        params = {"dataset_id": dataset_id}
        if ops is not None:
            params["ops"] = ",".join(ops)
        if n is not None:
            params["n"] = n
        seed = seed if seed is not None else self.config.default_seed
        if seed is not None:
            params["seed"] = seed
        headers = dict(_BINARY)
        headers[MANIFEST_HEADER] = json.dumps(manifest, separators=(",", ":"))
        return self._request("POST", "/v1/query", params=params, content=data,
                             headers=headers)

    # -- data ------------------------------------------------------------------------

    def ingest(self, records: list) -> dict:
        """POST /v1/data. ``label`` values given as bytes are base64-encoded
        here; strings are passed through as already-encoded."""
        wire = []
        for rec in records:
            entry = dict(rec)
            label = entry.get("label", b"")
            if isinstance(label, bytes):
                entry["label"] = base64.b64encode(label).decode("ascii")
            wire.append(entry)
        return self._request("POST", "/v1/data", json_body={"records": wire})

    def ingest_binary(self, source, manifest: dict) -> dict:
        """Binary upload; ``source`` may be bytes, a path, or an open binary
        file, and files are streamed rather than read into memory."""
        headers = dict(_BINARY)
        headers[MANIFEST_HEADER] = json.dumps(manifest, separators=(",", ":"))
        if isinstance(source, (str, Path)):
            with open(source, "rb") as fh:
                return self._request("POST", "/v1/data", content=fh, headers=headers)
        return self._request("POST", "/v1/data", content=source, headers=headers)

    def export_embeddings(self) -> bytes:
        return self._request("GET", "/v1/data/export")

    def export_manifest(self) -> dict:
        return self._request("GET", "/v1/data/export", params={"part": "manifest"})

    # -- models ------------------------------------------------------------------------

    def register_model(self, model_id: str, distribution: dict, *,
                       artifact: bytes | None = None, artifact_uri: str = "",
                       content_hash: str = "", metadata: dict | None = None,
                       training_ref=()) -> dict:
        payload = {
            "model_id": model_id,
            "distribution": distribution,
            "artifact_uri": artifact_uri,
            "content_hash": content_hash,
            "training_ref": list(training_ref),
        }
        if artifact is not None:
            payload["artifact"] = base64.b64encode(artifact).decode("ascii")
        if metadata is not None:
            payload["metadata"] = metadata
        return self._request("POST", "/v1/models", json_body=payload)

    def rank_models(self, dataset_id: str) -> dict:
        return self._request("GET", "/v1/models/rank", params={"dataset": dataset_id})

    # -- admin ---------------------------------------------------------------------------

    def force_update(self, reason: str = "manual") -> dict:
        return self._request("POST", "/v1/admin/update", json_body={"reason": reason})

    def status(self) -> dict:
        return self._request("GET", "/v1/status")


def _parse_body(resp: httpx.Response):
    kind = resp.headers.get("content-type", "")
    if kind.startswith("application/json"):
        return resp.json()
    return resp.content
