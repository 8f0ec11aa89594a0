"""Cluster-distribution signatures of datasets and the divergence between them.

A dataset's signature is the probability vector of its hard cluster
assignments. Signatures are only comparable when computed under the same
cluster model version; the version rides along in the type to enforce that.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import clustering
from .errors import EmptyInput, KMismatch, VersionMismatch


@dataclass(frozen=True)
class DatasetDistribution:
    k: int
    probs: np.ndarray = field(repr=False)
    sample_count: int
    cluster_model_version: int

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=np.float64)
        if arr.shape != (self.k,):
            raise KMismatch("probs length must equal k", k=self.k, got=int(arr.size))
        if (arr < 0).any() or abs(arr.sum() - 1.0) > 1e-9:
            raise KMismatch("probs must be a probability vector", total=float(arr.sum()))
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def to_payload(self) -> dict:
        return {
            "k": self.k,
            "probs": self.probs.tolist(),
            "sample_count": self.sample_count,
            "cluster_model_version": self.cluster_model_version,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "DatasetDistribution":
        return cls(
            k=int(payload["k"]),
            probs=np.array(payload["probs"], dtype=np.float64),
            sample_count=int(payload["sample_count"]),
            cluster_model_version=int(payload["cluster_model_version"]),
        )


def compute_pdf(model: clustering.ClusterModel, embeddings) -> DatasetDistribution:
    """Empirical distribution of hard cluster assignments."""
    arr = np.asarray(embeddings, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[0] == 0:
        raise EmptyInput("cannot summarize an empty dataset")
    labels, _ = clustering.assign_batch(model, arr)
    counts = np.bincount(labels, minlength=model.k)
    return DatasetDistribution(
        k=model.k,
        probs=counts / counts.sum(),
        sample_count=int(arr.shape[0]),
        cluster_model_version=model.version,
    )


def _check_comparable(p: DatasetDistribution, q: DatasetDistribution) -> None:
    if p.k != q.k:
        raise KMismatch("distributions have different k", p_k=p.k, q_k=q.k)
    if p.cluster_model_version != q.cluster_model_version:
        raise VersionMismatch(
            "distributions computed under different cluster model versions",
            p_version=p.cluster_model_version,
            q_version=q.cluster_model_version,
        )


def jsd(p: DatasetDistribution, q: DatasetDistribution) -> float:
    """Jensen-Shannon divergence in bits: 0 for equal distributions, 1 for
    disjoint supports, symmetric. 0*log(0/x) counts as 0."""
    _check_comparable(p, q)
    return float(jsd_vec(p.probs, q.probs))


def jsd_vec(p: np.ndarray, q: np.ndarray) -> float:
    """JSD on bare probability vectors (no version bookkeeping)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    m = 0.5 * (p + q)

    def half_kl(a: np.ndarray) -> float:
        mask = a > 0.0
        return float(np.sum(a[mask] * np.log2(a[mask] / m[mask])))

    value = 0.5 * half_kl(p) + 0.5 * half_kl(q)
    # exact-arithmetic value lies in [0, 1]; clip rounding spill
    return float(min(max(value, 0.0), 1.0))
