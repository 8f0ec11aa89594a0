"""K-means under a normalized Euclidean metric, elbow K selection, and
fuzzy memberships.

All distances divide each coordinate by a per-feature scale before the
Euclidean sum, so fitting happens in that scaled space and centroids map
back to plain per-cluster means. The fitter is Lloyd's algorithm with
deterministic seeding; see ``fit_kmeans`` for how small instances get the
extra restarts and the polish pass that make the solver reliably optimal
where optimality is checkable at all.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, vecio
from .errors import DimMismatch, RangeError, TooFewSamples

DEFAULT_FUZZIFIER = 2.0
MAX_ITER = 300

# Lloyd restarts are cheap on tiny inputs; when the number of distinct
# k-subsets of points is at most this, every subset is tried as a start.
SUBSET_START_BUDGET = 512

# Cap on polish rounds after the best Lloyd run (each round is one vectorized
# improvement sweep plus a Lloyd re-run; in practice it converges in a few).
POLISH_ROUNDS = 100


@dataclass(frozen=True)
class ClusterModel:
    """Fitted centroids plus the normalization statistics of the metric."""

    k: int
    dim: int
    centroids: np.ndarray = field(repr=False)  # (k, dim)
    feature_mean: np.ndarray = field(repr=False)  # (dim,)
    feature_scale: np.ndarray = field(repr=False)  # (dim,) strictly positive
    wss: float
    fuzzifier_m: float = DEFAULT_FUZZIFIER
    version: int = 1

    def __post_init__(self):
        for name in ("centroids", "feature_mean", "feature_scale"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if (self.feature_scale <= 0).any():
            raise RangeError("feature_scale must be strictly positive")
        if self.wss < 0:
            raise RangeError("wss must be >= 0", wss=self.wss)
        if self.fuzzifier_m <= 1.0:
            raise RangeError("fuzzifier must be > 1", fuzzifier_m=self.fuzzifier_m)

    def to_payload(self) -> dict:
        return {
            "k": self.k,
            "dim": self.dim,
            "centroids": self.centroids.tolist(),
            "feature_mean": self.feature_mean.tolist(),
            "feature_scale": self.feature_scale.tolist(),
            "wss": self.wss,
            "fuzzifier_m": self.fuzzifier_m,
            "version": self.version,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ClusterModel":
        return cls(
            k=int(payload["k"]),
            dim=int(payload["dim"]),
            centroids=np.array(payload["centroids"], dtype=np.float64).reshape(
                int(payload["k"]), int(payload["dim"])
            ),
            feature_mean=np.array(payload["feature_mean"], dtype=np.float64),
            feature_scale=np.array(payload["feature_scale"], dtype=np.float64),
            wss=float(payload["wss"]),
            fuzzifier_m=float(payload["fuzzifier_m"]),
            version=int(payload["version"]),
        )

    def save(self, path) -> None:
        vecio.write_blob(path, vecio.KIND_CLUSTER_MODEL, self.to_payload())

    @classmethod
    def load(cls, path) -> "ClusterModel":
        return cls.from_payload(vecio.read_blob(path, vecio.KIND_CLUSTER_MODEL))

    def summary(self) -> dict:
        return {"k": self.k, "dim": self.dim, "wss": self.wss, "version": self.version}

    # centroids mapped into the scaled space the kernels work in
    def _scaled_centroids(self) -> np.ndarray:
        return np.ascontiguousarray((self.centroids - self.feature_mean) / self.feature_scale)

    def _scale_points(self, vectors: np.ndarray) -> np.ndarray:
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.shape[1] != self.dim:
            raise DimMismatch("vector dim does not match model", expected=self.dim, got=int(arr.shape[1]))
        return np.ascontiguousarray((arr - self.feature_mean) / self.feature_scale)


@dataclass(frozen=True)
class ClusterAssignment:
    sample_id: str
    cluster_id: int
    distance: float
    max_membership: float


@dataclass(frozen=True)
class ElbowReport:
    k_values: tuple
    wss_values: tuple
    chosen_k: int
    knee_score: float


def normalized_distance(model: ClusterModel, a: np.ndarray, b: np.ndarray) -> float:
    """sqrt of the scale-normalized squared coordinate differences."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (model.dim,) or b.shape != (model.dim,):
        raise DimMismatch(
            "vector dims do not match model", expected=model.dim,
            got_a=list(a.shape), got_b=list(b.shape),
        )
    diff = (a - b) / model.feature_scale
    return float(np.sqrt(np.dot(diff, diff)))


def _as_matrix(embeddings) -> np.ndarray:
    arr = np.asarray(embeddings, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimMismatch("embeddings must be a list of equal-length vectors", ndim=int(arr.ndim))
    return np.ascontiguousarray(arr)


def _farthest_point_start(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Seed picks the first centroid; the rest are greedy farthest points."""
    rng = np.random.default_rng(seed)
    n = y.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((y - y[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d2))  # ties: lowest index
        chosen.append(nxt)
        d2 = np.minimum(d2, ((y - y[nxt]) ** 2).sum(axis=1))
    return y[chosen].copy()


def _lloyd(y: np.ndarray, centroids: np.ndarray, max_iter: int = MAX_ITER):
    """Lloyd's iterations to an assignment fixpoint.

    Empty clusters are repaired by reseeding on the globally farthest point
    (a distinct point per repair within one step); isolating the farthest
    point never raises the objective, so the recorded WSS trace stays
    non-increasing through repairs too. Returns (labels, centroids, trace)
    where trace[i] is the WSS after the i-th centroid update.
    """
    k = centroids.shape[0]
    centroids = centroids.copy()
    labels = None
    trace = []
    for _ in range(max_iter):
        new_labels, dmin2 = kernels.nn_assign(y, centroids)
        if labels is not None:
            # distances against the just-updated centroids = WSS of that update
            trace.append(float(dmin2.sum()))
            if np.array_equal(labels, new_labels):
                break
        sums, counts = kernels.group_sums(y, new_labels, k)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            order = np.argsort(-dmin2, kind="stable")
            for taken, c in enumerate(empty):
                new_labels[int(order[taken])] = c
            sums, counts = kernels.group_sums(y, new_labels, k)
        centroids = sums / counts[:, None]
        labels = new_labels
    else:
        _, dmin2 = kernels.nn_assign(y, centroids)
        trace.append(float(dmin2.sum()))
    return labels, centroids, trace


def _wss(y: np.ndarray, labels: np.ndarray, k: int) -> float:
    sums, counts = kernels.group_sums(y, labels, k)
    safe = np.maximum(counts, 1)
    mu = sums / safe[:, None]
    return float(((y - mu[labels]) ** 2).sum())


def _polish(y: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Single-point improvement moves on top of a Lloyd fixpoint.

    A point moves from cluster a to b when the exact WSS delta
    ``|b|/(|b|+1) d(x, mu_b)^2 - |a|/(|a|-1) d(x, mu_a)^2`` is negative.
    Moves are applied as a batch when the batch lowers WSS, otherwise one
    best move at a time; Lloyd re-runs after every accepted round. Escapes
    the coordinated-move local minima Lloyd alone cannot leave.
    """
    n = y.shape[0]
    labels = labels.copy()
    w = _wss(y, labels, k)
    rows = np.arange(n)
    for _ in range(POLISH_ROUNDS):
        sums, counts = kernels.group_sums(y, labels, k)
        mu = sums / np.maximum(counts, 1)[:, None]
        d2 = kernels.sqdist(y, np.ascontiguousarray(mu))
        ca = counts[labels].astype(np.float64)
        own = d2[rows, labels]
        leave = np.where(ca > 1, ca / np.maximum(ca - 1.0, 1.0) * own, np.inf)
        join = counts.astype(np.float64) / (counts + 1.0) * d2
        delta = join - leave[:, None]
        delta[rows, labels] = 0.0
        best_target = delta.argmin(axis=1)
        best_delta = delta[rows, best_target]
        improving = best_delta < -1e-12
        if not improving.any():
            break
        trial = labels.copy()
        trial[improving] = best_target[improving]
        accepted = False
        if np.unique(trial).size == k:
            wt = _wss(y, trial, k)
            if wt < w - 1e-12:
                labels, w, accepted = trial, wt, True
        if not accepted:
            i = int(np.argmin(best_delta))
            trial = labels.copy()
            trial[i] = best_target[i]
            if np.unique(trial).size < k:
                break
            wt = _wss(y, trial, k)
            if wt >= w - 1e-15:
                break
            labels, w = trial, wt
        sums, counts = kernels.group_sums(y, labels, k)
        labels, _, _ = _lloyd(y, sums / counts[:, None])
        w = _wss(y, labels, k)
    return labels


def fit_kmeans(
    embeddings,
    k: int,
    seed: int,
    feature_mean: np.ndarray | None = None,
    feature_scale: np.ndarray | None = None,
    fuzzifier_m: float = DEFAULT_FUZZIFIER,
    version: int = 1,
    max_iter: int = MAX_ITER,
) -> ClusterModel:
    """Fit k-means; deterministic given the seed.

    Normalization defaults to the training set's per-feature mean and
    standard deviation (zero-variance features get scale 1); pass explicit
    ``feature_mean``/``feature_scale`` to pin the metric instead.

    Starts: the seed-selected farthest-point seeding always runs; when the
    instance is small enough that trying every k-subset of points is cheap
    (at most ``SUBSET_START_BUDGET`` subsets), all of them run too. The best
    fixpoint by WSS then gets the single-point polish pass. On tiny
    instances this lands on the true optimum of the partition objective;
    large instances just get the farthest-point run plus polish.
    """
    x = _as_matrix(embeddings)
    n, dim = x.shape
    if k < 1:
        raise RangeError("k must be >= 1", k=k)
    if n < k:
        raise TooFewSamples("need at least k embeddings", k=k, count=n)

    if feature_mean is None:
        feature_mean = x.mean(axis=0)
    else:
        feature_mean = np.asarray(feature_mean, dtype=np.float64)
    if feature_scale is None:
        feature_scale = x.std(axis=0)
        feature_scale[feature_scale == 0.0] = 1.0
    else:
        feature_scale = np.asarray(feature_scale, dtype=np.float64)
    if feature_mean.shape != (dim,) or feature_scale.shape != (dim,):
        raise DimMismatch("normalization stats must match data dim", dim=dim)

    y = np.ascontiguousarray((x - feature_mean) / feature_scale)

    starts = [_farthest_point_start(y, k, seed)]
    if math.comb(n, k) <= SUBSET_START_BUDGET:
        starts.extend(
            y[list(combo)].copy() for combo in itertools.combinations(range(n), k)
        )

    best_w = np.inf
    best_labels = None
    for c0 in starts:
        labels, _, trace = _lloyd(y, c0, max_iter)
        w = trace[-1]
        if w < best_w - 1e-15:
            best_w, best_labels = w, labels

    labels = _polish(y, best_labels, k)
    sums, counts = kernels.group_sums(y, labels, k)
    centroids_scaled = sums / counts[:, None]
    _, dmin2 = kernels.nn_assign(y, centroids_scaled)
    wss = float(dmin2.sum())

    centroids = feature_mean + feature_scale * centroids_scaled
    return ClusterModel(
        k=k,
        dim=dim,
        centroids=centroids,
        feature_mean=feature_mean,
        feature_scale=feature_scale,
        wss=wss,
        fuzzifier_m=fuzzifier_m,
        version=version,
    )


def _knee(k_values, wss_values) -> tuple[int, float]:
    """Index of max perpendicular distance to the chord, both axes min-max
    normalized; ties and an all-flat curve resolve to the smallest K."""
    ks = np.asarray(k_values, dtype=np.float64)
    ws = np.asarray(wss_values, dtype=np.float64)
    kn = (ks - ks[0]) / (ks[-1] - ks[0])
    span = ws[0] - ws[-1]
    if span <= 0:
        return int(k_values[0]), 0.0
    wn = (ws - ws[-1]) / span
    # chord runs (0,1) -> (1,0); distance to it is |kn + wn - 1| / sqrt(2)
    score = np.abs(kn + wn - 1.0) / np.sqrt(2.0)
    best = int(np.argmax(score >= score.max() - 1e-12))  # first index at the max
    return int(k_values[best]), float(score[best])


def select_k_elbow(
    embeddings,
    k_min: int,
    k_max: int,
    seed: int,
    seeds_per_k: int = 5,
    fuzzifier_m: float = DEFAULT_FUZZIFIER,
) -> ElbowReport:
    """Sweep K over [k_min, k_max], pick the knee of the WSS curve.

    Each K takes the best of ``seeds_per_k`` deterministic fits so local
    minima do not dent the curve's monotonicity.
    """
    x = _as_matrix(embeddings)
    n = x.shape[0]
    if k_min < 1 or k_max > n or k_min >= k_max:
        raise RangeError(
            "need 1 <= k_min < k_max <= sample count", k_min=k_min, k_max=k_max, count=n
        )
    feature_mean = x.mean(axis=0)
    feature_scale = x.std(axis=0)
    feature_scale[feature_scale == 0.0] = 1.0

    k_values = list(range(k_min, k_max + 1))
    wss_values = []
    for k in k_values:
        best = np.inf
        for s in range(seeds_per_k):
            model = fit_kmeans(
                x, k, seed + s,
                feature_mean=feature_mean, feature_scale=feature_scale,
                fuzzifier_m=fuzzifier_m,
            )
            best = min(best, model.wss)
        wss_values.append(best)

    chosen_k, knee_score = _knee(k_values, wss_values)
    return ElbowReport(
        k_values=tuple(k_values),
        wss_values=tuple(wss_values),
        chosen_k=chosen_k,
        knee_score=knee_score,
    )


def _sq_distances(model: ClusterModel, vectors: np.ndarray) -> np.ndarray:
    y = model._scale_points(vectors)
    return kernels.sqdist(y, model._scaled_centroids())


def fuzzy_memberships(model: ClusterModel, v: np.ndarray) -> np.ndarray:
    """Soft assignment weights over all K clusters; sums to 1.

    u_i = 1 / sum_j (d_i/d_j)^(2/(m-1)). Computed through the numerically
    safe form t_j = (d_min/d_j)^(2/(m-1)), u = t/sum(t), which never
    overflows; a zero distance short-circuits to a one-hot vector (lowest
    such index).
    """
    return _memberships_batch(model, np.asarray(v, dtype=np.float64)[None, :])[0]


def _memberships_batch(model: ClusterModel, vectors: np.ndarray) -> np.ndarray:
    d2 = _sq_distances(model, vectors)
    n, k = d2.shape
    out = np.empty((n, k), dtype=np.float64)
    dmin2 = d2.min(axis=1)
    zero = dmin2 == 0.0
    if zero.any():
        out[zero] = 0.0
        hit = d2[zero].argmin(axis=1)  # lowest zero-distance index
        out[np.flatnonzero(zero), hit] = 1.0
    live = ~zero
    if live.any():
        # (d_min/d_j)^(2/(m-1)) on squared distances: exponent halves
        expo = 1.0 / (model.fuzzifier_m - 1.0)
        t = (dmin2[live, None] / d2[live]) ** expo
        out[live] = t / t.sum(axis=1, keepdims=True)
    return out


def max_memberships(model: ClusterModel, vectors: np.ndarray) -> np.ndarray:
    """Max fuzzy membership per row; the certainty signal for drift scoring."""
    return _memberships_batch(model, np.asarray(vectors, dtype=np.float64)).max(axis=1)


def assign(model: ClusterModel, v: np.ndarray, sample_id: str = "") -> ClusterAssignment:
    """Hard assignment to the nearest centroid (ties: lowest index)."""
    arr = np.asarray(v, dtype=np.float64)
    d2 = _sq_distances(model, arr[None, :])[0]
    cluster_id = int(np.argmin(d2))
    memberships = _memberships_batch(model, arr[None, :])[0]
    return ClusterAssignment(
        sample_id=sample_id,
        cluster_id=cluster_id,
        distance=float(np.sqrt(d2[cluster_id])),
        max_membership=float(memberships.max()),
    )


def assign_batch(model: ClusterModel, vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(cluster ids, normalized distances) for many vectors at once."""
    y = model._scale_points(vectors)
    labels, dmin2 = kernels.nn_assign(y, model._scaled_centroids())
    return labels, np.sqrt(dmin2)
