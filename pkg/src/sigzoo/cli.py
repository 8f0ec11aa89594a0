"""Command-line entry points.

Every subcommand prints one canonical-JSON object, byte-identical to what
the HTTP API would return for the same logical call (the service layer
builds both). Commands operate on a local data directory; `serve` exposes
the same service over HTTP.
"""

from __future__ import annotations

import base64
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import bench
from .config import load_config
from .errors import FormatError, SigzooError
from .service import QUERY_OPS, SigzooService, records_from_payload
from .vecio import (
    canonical_json,
    parse_embeddings_payload,
    read_manifest,
    write_embeddings,
)


def _emit(payload: dict) -> None:
    click.echo(canonical_json(payload))


def _fail(exc: SigzooError) -> None:
    click.echo(canonical_json(exc.to_dict()), err=True)
    sys.exit(1)


def _service(ctx) -> SigzooService:
    cfg = load_config(ctx.obj.get("config_path"))
    if ctx.obj.get("data_dir"):
        cfg = replace(cfg, data_dir=ctx.obj["data_dir"])
    return SigzooService(cfg)


def _load_embeddings_with_manifest(manifest_path: str):
    manifest = read_manifest(manifest_path)
    data_path = Path(manifest_path).parent / manifest["data_file"]
    arr, rows = parse_embeddings_payload(manifest, data_path.read_bytes())
    return arr, rows


def _read_json_file(path: str):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable json file: {exc}", path=path)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="YAML config file.")
@click.option("--data-dir", default=None, help="Override the data directory.")
@click.pass_context
def main(ctx, config_path, data_dir):
    """Distribution-indexed data and model service."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["data_dir"] = data_dir


@main.command()
@click.option("--host", default=None, help="Bind address (overrides config).")
@click.option("--port", default=None, type=int, help="Port (overrides config).")
@click.pass_context
def serve(ctx, host, port):
    """Run the HTTP service."""
    import uvicorn

    from .api import create_app

    try:
        service = _service(ctx)
    except SigzooError as exc:
        _fail(exc)
    app = create_app(service)
    uvicorn.run(
        app,
        host=host or service.config.listen_host,
        port=port or service.config.listen_port,
        log_level="warning",
    )


@main.command()
@click.option("--records", "records_path", type=click.Path(exists=True),
              help="JSON file with a records list (labels base64).")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True),
              help="Embedding manifest; binary file resolved next to it.")
@click.option("--default-label", default="unlabeled",
              help="Label for manifest rows that carry none.")
@click.pass_context
def ingest(ctx, records_path, manifest_path, default_label):
    """Insert labeled records from a JSON file or a binary embedding pair."""
    try:
        service = _service(ctx)
        if (records_path is None) == (manifest_path is None):
            raise FormatError("pass exactly one of --records or --manifest")
        if records_path:
            payload = _read_json_file(records_path)
            entries = payload["records"] if isinstance(payload, dict) else payload
            for entry in entries:
                entry["label"] = base64.b64decode(entry.get("label", ""))
            result = service.ingest(records_from_payload(entries))
        else:
            arr, rows = _load_embeddings_with_manifest(manifest_path)
            labels = [
                base64.b64decode(r["label"]) if r.get("label")
                else default_label.encode("utf-8")
                for r in rows
            ]
            result = service.ingest_embeddings(
                [r["id"] for r in rows], arr,
                [r.get("source", "") for r in rows],
                labels,
                [r.get("label_schema", "") for r in rows],
            )
        _emit(result)
    except SigzooError as exc:
        _fail(exc)


def _query_samples(manifest_path, json_path):
    if (manifest_path is None) == (json_path is None):
        raise FormatError("pass exactly one of --manifest or --json")
    if manifest_path:
        arr, _ = _load_embeddings_with_manifest(manifest_path)
        return {"embeddings": arr.astype(np.float64)}, {}
    body = _read_json_file(json_path)
    if "samples" not in body:
        raise FormatError("request json needs a samples object")
    return body["samples"], body


@main.command()
@click.option("--dataset-id", default="", help="Name for this dataset.")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True))
@click.option("--json", "json_path", type=click.Path(exists=True),
              help="Full request body as the API accepts it.")
@click.option("--ops", default=",".join(QUERY_OPS), show_default=True)
@click.option("-n", "n_override", type=int, default=None, help="Lookup count.")
@click.option("--seed", type=int, default=None)
@click.pass_context
def query(ctx, dataset_id, manifest_path, json_path, ops, n_override, seed):
    """Distribution, certainty, lookup and recommendation for a dataset."""
    try:
        service = _service(ctx)
        samples, body = _query_samples(manifest_path, json_path)
        _emit(service.handle_query(
            body.get("dataset_id", dataset_id),
            samples,
            ops=tuple(body.get("ops", [s for s in ops.split(",") if s])),
            n_override=body.get("n", n_override),
            seed=body.get("seed", seed),
        ))
    except SigzooError as exc:
        _fail(exc)


@main.command()
@click.option("--dataset-id", default="")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True))
@click.option("--json", "json_path", type=click.Path(exists=True))
@click.pass_context
def recommend(ctx, dataset_id, manifest_path, json_path):
    """Rank zoo models against a dataset's distribution."""
    try:
        service = _service(ctx)
        samples, body = _query_samples(manifest_path, json_path)
        _emit(service.handle_query(
            body.get("dataset_id", dataset_id), samples, ops=("recommend",)
        ))
    except SigzooError as exc:
        _fail(exc)


@main.command("register-model")
@click.option("--json", "json_path", type=click.Path(exists=True), required=True,
              help="Registration body as the API accepts it.")
@click.option("--artifact-file", type=click.Path(exists=True), default=None,
              help="Attach these bytes as the artifact blob.")
@click.pass_context
def register_model(ctx, json_path, artifact_file):
    """Add a trained model to the zoo."""
    try:
        service = _service(ctx)
        body = _read_json_file(json_path)
        artifact = None
        if artifact_file:
            artifact = Path(artifact_file).read_bytes()
        elif body.get("artifact") is not None:
            artifact = base64.b64decode(body["artifact"])
        _emit(service.register_model(
            body["model_id"],
            body["distribution"],
            artifact=artifact,
            artifact_uri=body.get("artifact_uri", ""),
            content_hash=body.get("content_hash", ""),
            metadata=body.get("metadata"),
            training_ref=tuple(body.get("training_ref", ())),
        ))
    except SigzooError as exc:
        _fail(exc)
    except KeyError as exc:
        _fail(FormatError(f"registration body missing key {exc}"))


@main.command()
@click.option("--reason", default="manual")
@click.pass_context
def update(ctx, reason):
    """Refit embedder and clusters, reindex the store, refresh the zoo."""
    try:
        _emit(_service(ctx).force_update(reason=reason))
    except SigzooError as exc:
        _fail(exc)


@main.command()
@click.pass_context
def status(ctx):
    """Service state: generation, store and zoo counters, backend."""
    try:
        _emit(_service(ctx).status())
    except SigzooError as exc:
        _fail(exc)


@main.command()
@click.option("--out", required=True, type=click.Path(), help="Binary output path.")
@click.option("--manifest-out", default=None, type=click.Path())
@click.pass_context
def export(ctx, out, manifest_out):
    """Write every live embedding plus its manifest sidecar."""
    try:
        service = _service(ctx)
        ids, vectors, sources = service.export_embeddings()
        mpath = write_embeddings(out, ids, vectors, sources, manifest_out)
        _emit({
            "count": len(ids),
            "dim": int(vectors.shape[1]) if vectors.size else 0,
            "data_file": str(out),
            "manifest_file": str(mpath),
        })
    except SigzooError as exc:
        _fail(exc)


@main.command("bench-lookup")
@click.option("--n", default=1000, show_default=True)
@click.option("--iters", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--pseudo-label-threshold", type=float, default=None,
              help="Also time pseudo_label at this threshold.")
@click.pass_context
def bench_lookup(ctx, n, iters, seed, pseudo_label_threshold):
    """Latency percentiles for store lookups."""
    try:
        service = _service(ctx)
        payload = {"lookup": bench.bench_lookup(service.store, n=n, iters=iters, seed=seed)}
        if pseudo_label_threshold is not None:
            payload["pseudo_label"] = bench.bench_pseudo_label(
                service.store, pseudo_label_threshold, iters=iters, seed=seed
            )
        _emit(payload)
    except SigzooError as exc:
        _fail(exc)


@main.command("bench-kernels")
@click.option("--n", default=50000, show_default=True)
@click.option("--dim", default=32, show_default=True)
@click.option("--k", default=15, show_default=True)
@click.option("--iters", default=7, show_default=True)
@click.option("--seed", default=0, show_default=True)
def bench_kernels(n, dim, k, iters, seed):
    """Compare the compiled and numpy kernel backends."""
    try:
        _emit(bench.bench_kernels(n=n, dim=dim, k=k, iters=iters, seed=seed))
    except SigzooError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
