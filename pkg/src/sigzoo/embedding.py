"""Raw samples to fixed-dimension embedding vectors.

The built-in embedder is a fitted linear projection: center and scale each
input feature, then project onto the top variance directions of the training
set. Deterministic by construction (SVD plus a fixed sign convention), so
every downstream contract can be tested exactly. Externally computed
embeddings enter through ``ingest_external_embeddings`` (re-exported from
``vecio``) and bypass this module's math entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import vecio
from .errors import EmptyInput, ShapeMismatch
from .vecio import ingest_external_embeddings  # noqa: F401  (public API)

KIND_BUILTIN = "builtin-projection"
KIND_EXTERNAL = "external"


@dataclass(frozen=True)
class RawSample:
    """One input sample: flat real tensor with a declared shape."""

    id: str
    payload: np.ndarray
    source: str = ""

    def __post_init__(self):
        arr = np.asarray(self.payload, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise ShapeMismatch("payload contains non-finite values", sample_id=self.id)
        object.__setattr__(self, "payload", arr)

    @property
    def shape(self) -> tuple:
        return tuple(self.payload.shape)


@dataclass(frozen=True)
class EmbedderSpec:
    """Fitted embedder parameters; immutable once created."""

    kind: str
    input_shape: tuple
    output_dim: int
    mean: np.ndarray = field(repr=False)
    scale: np.ndarray = field(repr=False)
    projection: np.ndarray = field(repr=False)  # (output_dim, n_features)
    fitted_on: int
    version: int
    degenerate: bool = False
    rank: int = 0

    def __post_init__(self):
        for name in ("mean", "scale", "projection"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def to_payload(self) -> dict:
        return {
            "kind": self.kind,
            "input_shape": list(self.input_shape),
            "output_dim": self.output_dim,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "projection": self.projection.tolist(),
            "fitted_on": self.fitted_on,
            "version": self.version,
            "degenerate": self.degenerate,
            "rank": self.rank,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "EmbedderSpec":
        return cls(
            kind=payload["kind"],
            input_shape=tuple(payload["input_shape"]),
            output_dim=int(payload["output_dim"]),
            mean=np.array(payload["mean"], dtype=np.float64),
            scale=np.array(payload["scale"], dtype=np.float64),
            projection=np.array(payload["projection"], dtype=np.float64).reshape(
                int(payload["output_dim"]), -1
            ),
            fitted_on=int(payload["fitted_on"]),
            version=int(payload["version"]),
            degenerate=bool(payload["degenerate"]),
            rank=int(payload["rank"]),
        )

    def save(self, path) -> None:
        vecio.write_blob(path, vecio.KIND_EMBEDDER, self.to_payload())

    @classmethod
    def load(cls, path) -> "EmbedderSpec":
        return cls.from_payload(vecio.read_blob(path, vecio.KIND_EMBEDDER))


def _fix_signs(directions: np.ndarray) -> np.ndarray:
    """Flip each direction so its first nonzero component is positive."""
    out = directions.copy()
    for row in out:
        nz = np.nonzero(row)[0]
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return out


def fit_embedder(
    samples: list[RawSample], output_dim: int, prev_version: int = 0
) -> EmbedderSpec:
    """Fit the built-in projection embedder on a training set.

    Features are centered and scaled (zero-variance features get scale 1),
    then the top ``output_dim`` variance directions are extracted. When the
    data cannot support ``output_dim`` independent directions — fewer
    distinct samples than requested, or rank deficiency — the remaining
    directions are zero rows and the spec is flagged degenerate rather than
    rejected.
    """
    if not samples:
        raise EmptyInput("no samples to fit on")
    if output_dim < 1:
        raise ShapeMismatch("output_dim must be >= 1", output_dim=output_dim)
    shape = samples[0].shape
    for s in samples:
        if s.shape != shape:
            raise ShapeMismatch(
                "samples disagree on shape", expected=list(shape), got=list(s.shape), sample_id=s.id
            )
    x = np.stack([s.payload.reshape(-1) for s in samples]).astype(np.float64)
    n, f = x.shape

    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    z = (x - mean) / scale

    # Right singular vectors of the centered matrix = eigenvectors of the
    # covariance; singular values below the standard numerical-rank cutoff
    # mark directions the data does not actually span.
    _, svals, vt = np.linalg.svd(z, full_matrices=False)
    if svals.size:
        tol = max(n, f) * np.finfo(np.float64).eps * svals[0]
        rank = int((svals > tol).sum())
    else:
        rank = 0

    distinct = np.unique(x, axis=0).shape[0]
    keep = min(output_dim, rank, vt.shape[0])
    projection = np.zeros((output_dim, f), dtype=np.float64)
    projection[:keep] = _fix_signs(vt[:keep])
    degenerate = distinct < output_dim or rank < output_dim

    return EmbedderSpec(
        kind=KIND_BUILTIN,
        input_shape=shape,
        output_dim=output_dim,
        mean=mean,
        scale=scale,
        projection=projection,
        fitted_on=n,
        version=prev_version + 1,
        degenerate=degenerate,
        rank=rank,
    )


def embed(spec: EmbedderSpec, sample: RawSample) -> np.ndarray:
    """Embed one sample; pure function of (spec, sample), float32 output."""
    if sample.shape != spec.input_shape:
        raise ShapeMismatch(
            "sample shape does not match the fitted embedder",
            expected=list(spec.input_shape),
            got=list(sample.shape),
            sample_id=sample.id,
        )
    # same code path as the batch case so single and bulk embedding agree bitwise
    return embed_batch(spec, sample.payload[None, ...])[0]


def embed_batch(spec: EmbedderSpec, payloads: np.ndarray) -> np.ndarray:
    """Embed an (n, *input_shape) stack; rows correspond to inputs."""
    arr = np.asarray(payloads, dtype=np.float64)
    if tuple(arr.shape[1:]) != spec.input_shape:
        raise ShapeMismatch(
            "batch shape does not match the fitted embedder",
            expected=list(spec.input_shape),
            got=list(arr.shape[1:]),
        )
    z = (arr.reshape(arr.shape[0], -1) - spec.mean) / spec.scale
    return (z @ spec.projection.T).astype(np.float32)
