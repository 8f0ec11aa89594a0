"""Benchmarks: compiled vs numpy kernels, and store operation latency."""

from __future__ import annotations

import time

import numpy as np

from . import kernels
from .datastore import DataStore
from .distribution import DatasetDistribution
from .errors import NotInitialized


def percentile_report(samples_ms) -> dict:
    arr = np.asarray(samples_ms, dtype=np.float64)
    return {
        "iters": int(arr.size),
        "p50_ms": float(np.percentile(arr, 50)),
        "p90_ms": float(np.percentile(arr, 90)),
        "p99_ms": float(np.percentile(arr, 99)),
        "mean_ms": float(arr.mean()),
        "min_ms": float(arr.min()),
        "max_ms": float(arr.max()),
    }


def _timed(fn, iters: int) -> list:
    fn()  # warm caches and allocators before measuring
    out = []
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        out.append((time.perf_counter() - t0) * 1000.0)
    return out


def bench_kernels(n: int = 50000, dim: int = 32, k: int = 15,
                  iters: int = 7, seed: int = 0) -> dict:
    """Time the three hot kernels on every importable backend."""
    rng = np.random.default_rng(seed)
    y = np.ascontiguousarray(rng.normal(size=(n, dim)))
    c = np.ascontiguousarray(rng.normal(size=(k, dim)))
    labels = rng.integers(0, k, size=n)
    report = {"n": n, "dim": dim, "k": k, "active_backend": kernels.BACKEND,
              "backends": {}}
    for name, mod in sorted(kernels.available_backends().items()):
        report["backends"][name] = {
            "sqdist": percentile_report(_timed(lambda: mod.sqdist(y, c), iters)),
            "nn_assign": percentile_report(_timed(lambda: mod.nn_assign(y, c), iters)),
            "group_sums": percentile_report(
                _timed(lambda: mod.group_sums(y, labels, k), iters)
            ),
        }
    back = report["backends"]
    if "c" in back and "py" in back:
        report["speedup_c_over_py"] = {
            op: round(back["py"][op]["p50_ms"] / max(back["c"][op]["p50_ms"], 1e-9), 2)
            for op in ("sqdist", "nn_assign", "group_sums")
        }
    return report


def bench_lookup(store: DataStore, n: int = 1000, iters: int = 50,
                 seed: int = 0) -> dict:
    """Latency of distribution-matched lookup against the live store."""
    snap = store.snapshot
    if snap.model is None or snap.per_cluster is None:
        raise NotInitialized("store has no cluster index to benchmark against")
    k = snap.model.k
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(k), size=iters)
    samples = []
    for i in range(iters):
        pdf = DatasetDistribution(
            k=k, probs=probs[i], sample_count=n, cluster_model_version=snap.version
        )
        t0 = time.perf_counter()
        store.lookup_by_distribution(pdf, n, seed=int(rng.integers(2**31)))
        samples.append((time.perf_counter() - t0) * 1000.0)
    return {"op": "lookup_by_distribution", "n": n, "store_records": int(len(snap.live_rows())),
            "k": k, **percentile_report(samples)}


def bench_pseudo_label(store: DataStore, threshold: float, iters: int = 50,
                       seed: int = 0) -> dict:
    """Latency of single-vector pseudo-label queries."""
    snap = store.snapshot
    if snap.model is None:
        raise NotInitialized("store has no cluster index to benchmark against")
    rng = np.random.default_rng(seed)
    centroids = snap.model.centroids
    scale = snap.model.feature_scale
    samples = []
    for _ in range(iters):
        base = centroids[int(rng.integers(centroids.shape[0]))]
        v = base + rng.normal(scale=0.05, size=base.shape) * scale
        t0 = time.perf_counter()
        store.pseudo_label(v, threshold)
        samples.append((time.perf_counter() - t0) * 1000.0)
    return {"op": "pseudo_label", "threshold": threshold, **percentile_report(samples)}
