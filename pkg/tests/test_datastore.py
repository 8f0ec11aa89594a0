import numpy as np
import pytest

from oracles import apportion_oracle
from sigzoo.clustering import ClusterModel, assign_batch, fit_kmeans
from sigzoo.datastore import (
    DataRecord,
    DataStore,
    apportion_with_capacity,
    largest_remainder,
)
from sigzoo.distribution import DatasetDistribution
from sigzoo.errors import (
    DimMismatch,
    DuplicateId,
    EmptyInput,
    EmptyStore,
    InsufficientData,
    KMismatch,
    NotInitialized,
    VersionMismatch,
)


def _rec(sample_id, emb, label=b"lbl", raw=None):
    return DataRecord(
        sample_id=sample_id,
        embedding=None if emb is None else np.asarray(emb, dtype=np.float32),
        label=label,
        raw=raw,
    )


def _grid_model(version=1):
    """Three fixed centroids, unit metric; assignments are obvious by eye."""
    return ClusterModel(
        k=3, dim=2,
        centroids=[[0.0, 0.0], [100.0, 0.0], [0.0, 100.0]],
        feature_mean=[0.0, 0.0], feature_scale=[1.0, 1.0],
        wss=0.0, version=version,
    )


def _populated(tmp_path, rng, per=10, version=1):
    store = DataStore.open(tmp_path / "store")
    model = _grid_model(version)
    recs = []
    for c, center in enumerate(model.centroids):
        for i in range(per):
            recs.append(_rec(f"c{c}-{i}", center + rng.normal(0, 1, size=2)))
    store.insert(recs)
    store.reindex(model)
    return store, model


# -- apportionment ------------------------------------------------------------


def test_largest_remainder_hand_case():
    got = largest_remainder(np.array([0.5, 0.3, 0.2]), 10)
    assert got.tolist() == [5, 3, 2]


def test_largest_remainder_matches_oracle(rng):
    for _ in range(500):
        k = int(rng.integers(1, 12))
        w = rng.random(k) * rng.choice([1.0, 100.0])
        n = int(rng.integers(0, 200))
        got = largest_remainder(w, n)
        assert got.sum() == (n if w.sum() > 0 else 0)
        assert got.tolist() == apportion_oracle(w, n) or n == 0
    assert largest_remainder(np.zeros(3), 5).tolist() == [0, 0, 0]


def test_remainder_ties_break_to_lowest_index():
    # equal weights, one leftover seat: the first cluster gets it
    assert largest_remainder(np.array([1.0, 1.0]), 3).tolist() == [2, 1]
    assert largest_remainder(np.array([1.0, 1.0, 1.0, 1.0]), 6).tolist() == [2, 2, 1, 1]


def test_apportion_respects_capacity_and_redistributes():
    # cluster 0 is clipped at 2; the spill re-runs over the remaining weights,
    # with leftover seats favoring the lowest index each round
    got = apportion_with_capacity(np.array([0.9, 0.05, 0.05]), 10,
                                  np.array([2, 20, 20]))
    assert got.tolist() == [2, 5, 3]
    # zero-weight clusters absorb the spill when they are all that is left
    got = apportion_with_capacity(np.array([1.0, 0.0]), 6, np.array([3, 5]))
    assert got.tolist() == [3, 3]
    with pytest.raises(InsufficientData):
        apportion_with_capacity(np.array([1.0, 1.0]), 10, np.array([4, 4]))


def test_apportion_random_never_exceeds_caps(rng):
    for _ in range(300):
        k = int(rng.integers(1, 8))
        caps = rng.integers(0, 30, size=k)
        total = int(caps.sum())
        if total == 0:
            continue
        n = int(rng.integers(1, total + 1))
        w = rng.random(k)
        got = apportion_with_capacity(w, n, caps)
        assert got.sum() == n
        assert (got <= caps).all()
        assert (got >= 0).all()


# -- ingest and snapshots ------------------------------------------------------


def test_insert_and_snapshot(tmp_path, rng):
    store = DataStore.open(tmp_path / "s")
    store.insert([_rec(f"a{i}", rng.normal(size=4)) for i in range(10)])
    snap = store.snapshot
    assert snap.count == 10
    assert snap.dim == 4
    assert snap.version == 0
    assert store.stats()["records"] == 10
    rec = snap.record(3)
    assert rec.sample_id == "a3"
    assert rec.cluster_id == -1


def test_insert_validation(tmp_path, rng):
    store = DataStore.open(tmp_path / "s")
    with pytest.raises(EmptyInput):
        store.insert([])
    with pytest.raises(DuplicateId):
        store.insert([_rec("x", rng.normal(size=3)), _rec("x", rng.normal(size=3))])
    with pytest.raises(EmptyInput):
        store.insert([_rec("x", rng.normal(size=3), label=b"")])
    with pytest.raises(EmptyInput):
        store.insert([_rec("x", None)])
    store.insert([_rec("x", rng.normal(size=3))])
    with pytest.raises(DimMismatch):
        store.insert([_rec("y", rng.normal(size=5))])
    with pytest.raises(DimMismatch):
        store.insert([_rec("y", [1.0, np.nan, 0.0])])
    # failed batches must leave nothing behind
    assert store.stats()["records"] == 1


def test_upsert_supersedes_and_audits(tmp_path, rng):
    store, model = _populated(tmp_path, rng)
    old = store.snapshot.record(0)
    store.insert([_rec(old.sample_id, np.array([100.0, 0.0]))])
    stats = store.stats()
    assert stats["records"] == 30
    assert stats["superseded"] == 1
    assert stats["audit_entries"] == 1
    emb, missing = store.embeddings_for_ids([old.sample_id])
    assert not missing
    np.testing.assert_array_equal(emb[0], np.array([100.0, 0.0], dtype=np.float32))
    # the replacement was indexed at ingest, under the current model
    assert sum(store.snapshot.cluster_histogram()) == 30


def test_fresh_rows_indexed_at_ingest(tmp_path, rng):
    store, model = _populated(tmp_path, rng)
    pts = np.array([[1.0, 2.0], [99.0, 1.0]])
    store.insert([_rec("n0", pts[0]), _rec("n1", pts[1])])
    snap = store.snapshot
    want, _ = assign_batch(model, pts)
    assert snap.cluster_ids[30] == want[0]
    assert snap.cluster_ids[31] == want[1]
    assert sum(snap.cluster_histogram()) == 32


def test_raw_only_rows_wait_for_embedding(tmp_path, rng):
    store, model = _populated(tmp_path, rng)
    store.insert([_rec("r0", None, raw=np.arange(6.0)), _rec("r1", None, raw=np.arange(6.0))])
    assert store.pending_rows() == [30, 31]
    assert store.stats()["pending"] == 2
    assert sum(store.snapshot.cluster_histogram()) == 30  # not indexed
    ids, _, _ = store.export_embeddings()
    assert "r0" not in ids
    _, missing = store.embeddings_for_ids(["r0"])
    assert missing == ["r0"]
    # embedding arrives later as an upsert of the same id
    store.insert([_rec("r0", np.array([0.0, 1.0]))])
    assert store.pending_rows() == [31]
    assert sum(store.snapshot.cluster_histogram()) == 31


# -- reindex -------------------------------------------------------------------


def test_reindex_assigns_under_model(tmp_path, rng):
    store, model = _populated(tmp_path, rng)
    snap = store.snapshot
    assert snap.version == 1
    assert snap.cluster_histogram() == [10, 10, 10]
    live = snap.live_rows()
    want, _ = assign_batch(model, snap.emb[live].astype(np.float64))
    np.testing.assert_array_equal(snap.cluster_ids[live], want)
    assert (tmp_path / "store" / "cluster.idx").exists()


def test_reindex_version_must_increase(tmp_path, rng):
    store, model = _populated(tmp_path, rng)
    with pytest.raises(VersionMismatch):
        store.reindex(model)  # same version
    with pytest.raises(DimMismatch):
        store.reindex(ClusterModel(
            k=2, dim=3, centroids=np.zeros((2, 3)) + [[0], [1]],
            feature_mean=np.zeros(3), feature_scale=np.ones(3), wss=0.0, version=5,
        ))
    out = store.reindex(_grid_model(version=2))
    assert out["version"] == 2
    assert out["total"] == 30
    assert out["changed"] == 0  # same centroids, same assignments


# -- lookup ---------------------------------------------------------------------


def test_lookup_hand_apportionment(tmp_path, rng):
    store, model = _populated(tmp_path, rng)
    pdf = DatasetDistribution(k=3, probs=np.array([0.5, 0.3, 0.2]),
                              sample_count=10, cluster_model_version=1)
    out = store.lookup_by_distribution(pdf, 10, seed=7)
    assert out.per_cluster_counts == (5, 3, 2)
    assert len(out.records) == 10
    ids = [r.sample_id for r in out.records]
    assert len(set(ids)) == 10  # without replacement
    for rec in out.records:
        assert rec.cluster_model_version == 1
    hist = np.bincount([r.cluster_id for r in out.records], minlength=3)
    assert hist.tolist() == [5, 3, 2]


def test_lookup_deterministic_per_seed(tmp_path, rng):
    store, _ = _populated(tmp_path, rng)
    pdf = DatasetDistribution(k=3, probs=np.array([1 / 3] * 3),
                              sample_count=9, cluster_model_version=1)
    a = store.lookup_by_distribution(pdf, 9, seed=3)
    b = store.lookup_by_distribution(pdf, 9, seed=3)
    assert [r.sample_id for r in a.records] == [r.sample_id for r in b.records]
    assert a.rng_seed == 3


def test_lookup_error_paths(tmp_path, rng):
    store, _ = _populated(tmp_path, rng)
    stale = DatasetDistribution(k=3, probs=np.array([1.0, 0.0, 0.0]),
                                sample_count=5, cluster_model_version=9)
    with pytest.raises(VersionMismatch):
        store.lookup_by_distribution(stale, 5, seed=0)
    wrong_k = DatasetDistribution(k=2, probs=np.array([0.5, 0.5]),
                                  sample_count=5, cluster_model_version=1)
    with pytest.raises(KMismatch):
        store.lookup_by_distribution(wrong_k, 5, seed=0)
    pdf = DatasetDistribution(k=3, probs=np.array([1 / 3] * 3),
                              sample_count=5, cluster_model_version=1)
    with pytest.raises(InsufficientData):
        store.lookup_by_distribution(pdf, 31, seed=0)
    with pytest.raises(InsufficientData):
        store.lookup_by_distribution(pdf, 0, seed=0)
    bare = DataStore.open(tmp_path / "bare")
    with pytest.raises(VersionMismatch):
        bare.lookup_by_distribution(pdf, 1, seed=0)


def test_lookup_overflows_to_other_clusters(tmp_path, rng):
    store, _ = _populated(tmp_path, rng, per=10)
    # all mass on cluster 0 (10 rows); asking for 16 must spill over
    pdf = DatasetDistribution(k=3, probs=np.array([1.0, 0.0, 0.0]),
                              sample_count=10, cluster_model_version=1)
    out = store.lookup_by_distribution(pdf, 16, seed=1)
    assert out.per_cluster_counts[0] == 10
    assert sum(out.per_cluster_counts) == 16


# -- pseudo labeling -------------------------------------------------------------


def test_pseudo_label_exact_match(tmp_path, rng):
    store, _ = _populated(tmp_path, rng)
    target = store.snapshot.record(5)
    out = store.pseudo_label(target.embedding.astype(np.float64), threshold_t=0.5)
    assert out.decision == "reused"
    assert out.distance == 0.0
    assert out.matched_record.sample_id == target.sample_id
    assert out.matched_record.label == target.label


def test_pseudo_label_threshold_is_strict(tmp_path):
    store = DataStore.open(tmp_path / "s")
    store.insert([_rec("origin", [0.0, 0.0]), _rec("far", [100.0, 100.0])])
    store.reindex(ClusterModel(
        k=2, dim=2, centroids=[[0.0, 0.0], [100.0, 100.0]],
        feature_mean=[0.0, 0.0], feature_scale=[1.0, 1.0], wss=0.0, version=1,
    ))
    t = 0.25
    at_t = store.pseudo_label(np.array([t, 0.0]), threshold_t=t)
    assert at_t.decision == "needs-labeling"
    assert at_t.matched_record is None
    assert at_t.distance == t
    below = store.pseudo_label(np.array([np.nextafter(t, 0.0), 0.0]), threshold_t=t)
    assert below.decision == "reused"
    assert below.distance < t


def test_pseudo_label_falls_back_across_clusters(tmp_path):
    store = DataStore.open(tmp_path / "s")
    store.insert([_rec("far-own", [-5.0]), _rec("near-other", [5.5])])
    store.reindex(ClusterModel(
        k=2, dim=1, centroids=[[0.0], [10.0]],
        feature_mean=[0.0], feature_scale=[1.0], wss=0.0, version=1,
    ))
    # query sits in cluster 0; its only in-cluster record is 9 away, but a
    # cluster-1 record is within the threshold
    out = store.pseudo_label(np.array([4.0]), threshold_t=2.0)
    assert out.decision == "reused"
    assert out.matched_record.sample_id == "near-other"
    assert abs(out.distance - 1.5) < 1e-12


def test_pseudo_label_error_paths(tmp_path, rng):
    bare = DataStore.open(tmp_path / "bare")
    with pytest.raises(NotInitialized):
        bare.pseudo_label(np.zeros(2), threshold_t=1.0)
    store, _ = _populated(tmp_path, rng)
    with pytest.raises(DimMismatch):
        store.pseudo_label(np.zeros(3), threshold_t=1.0)
    empty = DataStore.open(tmp_path / "empty")
    empty.insert([_rec("p", None, raw=np.arange(3.0))])
    empty_model = ClusterModel(
        k=1, dim=2, centroids=[[0.0, 0.0]],
        feature_mean=[0.0, 0.0], feature_scale=[1.0, 1.0], wss=0.0, version=1,
    )
    empty.reindex(empty_model)
    with pytest.raises(EmptyStore):
        empty.pseudo_label(np.zeros(2), threshold_t=1.0)


# -- durability -------------------------------------------------------------------


def test_reopen_recovers_committed_state(tmp_path, rng):
    store, model = _populated(tmp_path, rng)
    store.insert([_rec("extra", [1.0, 1.0])])
    again = DataStore.open(tmp_path / "store", model=model)
    assert again.stats()["records"] == 31
    assert again.snapshot.version == 1
    assert sum(again.snapshot.cluster_histogram()) == 31
    a, _ = store.embeddings_for_ids(["extra"])
    b, _ = again.embeddings_for_ids(["extra"])
    assert a.tobytes() == b.tobytes()


def test_truncated_tail_rolls_back_to_last_commit(tmp_path, rng):
    store, model = _populated(tmp_path, rng)
    log = tmp_path / "store" / "records.log"
    committed = log.stat().st_size
    # a record frame with no commit after it, then garbage
    from sigzoo.datastore import FRAME_RECORD, _encode_record, _frame
    orphan = _frame(FRAME_RECORD, _encode_record(_rec("orphan", [9.0, 9.0])))
    with open(log, "ab") as f:
        f.write(orphan + b"\x99\x88\x77")
    again = DataStore.open(tmp_path / "store", model=model)
    assert again.stats()["records"] == 30
    missing = again.embeddings_for_ids(["orphan"])[1]
    assert missing == ["orphan"]
    assert log.stat().st_size == committed  # tail truncated on open


def test_corrupt_frame_keeps_only_prior_prefix(tmp_path, rng):
    store = DataStore.open(tmp_path / "s")
    store.insert([_rec("a", [1.0, 2.0])])
    store.insert([_rec("b", [3.0, 4.0])])
    log = tmp_path / "s" / "records.log"
    buf = bytearray(log.read_bytes())
    buf[8] ^= 0xFF  # inside the first record frame: CRC must now fail
    log.write_bytes(bytes(buf))
    again = DataStore.open(tmp_path / "s")
    assert again.stats()["records"] == 0


def test_stale_sidecar_triggers_reindex(tmp_path, rng):
    store, model = _populated(tmp_path, rng)
    (tmp_path / "store" / "cluster.idx").write_bytes(b"FDMS garbage")
    again = DataStore.open(tmp_path / "store", model=model)
    assert again.snapshot.version == model.version
    assert again.snapshot.cluster_histogram() == [10, 10, 10]


def test_open_without_model_keeps_rows_unindexed(tmp_path, rng):
    store, _ = _populated(tmp_path, rng)
    (tmp_path / "store" / "cluster.idx").unlink()
    again = DataStore.open(tmp_path / "store")
    assert again.snapshot.version == 0
    assert again.stats()["records"] == 30
    assert again.snapshot.per_cluster is None


def test_export_embeddings_row_order(tmp_path, rng):
    store, _ = _populated(tmp_path, rng, per=3)
    store.insert([_rec("pend", None, raw=np.arange(2.0))])
    ids, arr, sources = store.export_embeddings()
    assert len(ids) == 9
    assert "pend" not in ids
    snap = store.snapshot
    rows = [r for r in snap.live_rows() if not snap.pending[r]]
    assert ids == [snap.ids[r] for r in rows]
    assert arr.dtype == np.float32
    assert arr.shape == (9, 2)
