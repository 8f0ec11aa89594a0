import hashlib

import numpy as np
import pytest

from oracles import jsd_oracle, random_simplex
from sigzoo.distribution import DatasetDistribution
from sigzoo.errors import (
    DuplicateId,
    HashMismatch,
    NotFound,
    RangeError,
    VersionMismatch,
)
from sigzoo.modelzoo import ModelZoo, Recommendation


def _dist(probs, version=1):
    probs = np.asarray(probs, dtype=np.float64)
    return DatasetDistribution(k=probs.size, probs=probs / probs.sum(),
                               sample_count=50, cluster_model_version=version)


def _zoo(tmp_path, version=1):
    return ModelZoo(tmp_path / "zoo", cluster_model_version=version)


def test_register_and_get(tmp_path):
    zoo = _zoo(tmp_path)
    zoo.register_model("m1", _dist([0.5, 0.5]), artifact=b"weights-1",
                       metadata={"arch": "mlp"}, training_ref=("a", "b"))
    rec = zoo.get("m1")
    assert rec.model_id == "m1"
    assert rec.content_hash == hashlib.sha256(b"weights-1").hexdigest()
    assert rec.metadata == {"arch": "mlp"}
    assert rec.training_ref == ("a", "b")
    assert not rec.stale
    assert zoo.artifact_bytes("m1") == b"weights-1"
    with pytest.raises(NotFound):
        zoo.get("nope")


def test_register_validation(tmp_path):
    zoo = _zoo(tmp_path)
    zoo.register_model("m1", _dist([0.5, 0.5]), artifact=b"x")
    with pytest.raises(DuplicateId):
        zoo.register_model("m1", _dist([0.5, 0.5]), artifact=b"y")
    with pytest.raises(VersionMismatch):
        zoo.register_model("m2", _dist([0.5, 0.5], version=3), artifact=b"y")
    with pytest.raises(HashMismatch):
        zoo.register_model("m2", _dist([0.5, 0.5]))  # neither bytes nor uri
    with pytest.raises(HashMismatch):
        zoo.register_model("m2", _dist([0.5, 0.5]), artifact=b"y",
                           content_hash="0" * 64)
    # declared hash that matches is accepted
    zoo.register_model("m2", _dist([0.5, 0.5]), artifact=b"y",
                       content_hash=hashlib.sha256(b"y").hexdigest())


def test_artifacts_dedupe_by_content(tmp_path):
    zoo = _zoo(tmp_path)
    zoo.register_model("a", _dist([0.5, 0.5]), artifact=b"same-bytes")
    zoo.register_model("b", _dist([0.3, 0.7]), artifact=b"same-bytes")
    blobs = list((tmp_path / "zoo" / "artifacts").iterdir())
    assert len(blobs) == 1


def test_corrupt_artifact_detected(tmp_path):
    zoo = _zoo(tmp_path)
    zoo.register_model("m", _dist([0.5, 0.5]), artifact=b"payload")
    path = zoo.artifact_path(zoo.get("m").content_hash)
    path.write_bytes(b"tampered")
    with pytest.raises(HashMismatch):
        zoo.artifact_bytes("m")
    path.unlink()
    with pytest.raises(NotFound):
        zoo.artifact_bytes("m")


def test_uri_only_model_has_no_bytes(tmp_path):
    zoo = _zoo(tmp_path)
    zoo.register_model("ext", _dist([0.5, 0.5]), artifact_uri="s3://bucket/model")
    assert zoo.get("ext").artifact_uri == "s3://bucket/model"
    with pytest.raises(NotFound):
        zoo.artifact_bytes("ext")


def test_rank_all_matches_oracle(tmp_path, rng):
    zoo = _zoo(tmp_path)
    k = 6
    train = {}
    for i in range(20):
        p = random_simplex(rng, k)
        mid = f"m{i:02d}"
        train[mid] = p
        zoo.register_model(mid, _dist(p), artifact=bytes([i]))
    for _ in range(200):
        q = random_simplex(rng, k)
        ranked = zoo.rank_all(_dist(q))
        assert len(ranked) == 20
        want = sorted(((mid, jsd_oracle(q, p)) for mid, p in train.items()),
                      key=lambda pair: (pair[1], pair[0]))
        assert [m for m, _ in ranked] == [m for m, _ in want]
        for (_, got_d), (_, want_d) in zip(ranked, want):
            assert abs(got_d - want_d) < 1e-10
        ds = [d for _, d in ranked]
        assert ds == sorted(ds)


def test_equal_divergence_ties_break_by_id(tmp_path):
    zoo = _zoo(tmp_path)
    # both are the same divergence from a uniform query, by symmetry
    zoo.register_model("zzz", _dist([1.0, 0.0]), artifact=b"a")
    zoo.register_model("aaa", _dist([0.0, 1.0]), artifact=b"b")
    ranked = zoo.rank_all(_dist([0.5, 0.5]))
    assert abs(ranked[0][1] - ranked[1][1]) < 1e-15
    assert [m for m, _ in ranked] == ["aaa", "zzz"]


def test_recommend_threshold_semantics(tmp_path):
    zoo = _zoo(tmp_path)
    zoo.register_model("near", _dist([0.5, 0.5]), artifact=b"n")
    out = zoo.recommend(_dist([0.5, 0.5]), threshold=0.1)
    assert out.decision == "fine-tune"
    assert out.chosen == "near"
    assert out.ranked[0] == ("near", 0.0)
    # disjoint support: divergence is exactly 1.0, which is not < 1.0
    zoo2 = _zoo(tmp_path / "other")
    zoo2.register_model("far", _dist([1.0, 0.0]), artifact=b"f")
    out = zoo2.recommend(_dist([0.0, 1.0]), threshold=1.0)
    assert out.decision == "train-from-scratch"
    assert out.chosen is None
    with pytest.raises(RangeError):
        zoo.recommend(_dist([0.5, 0.5]), threshold=0.0)
    with pytest.raises(RangeError):
        zoo.recommend(_dist([0.5, 0.5]), threshold=1.5)


def test_recommend_empty_zoo(tmp_path):
    zoo = _zoo(tmp_path)
    out = zoo.recommend(_dist([0.5, 0.5]), threshold=0.5)
    assert out.decision == "train-from-scratch"
    assert out.ranked == ()
    assert out.chosen is None


def test_rank_checks_input_version(tmp_path):
    zoo = _zoo(tmp_path)
    zoo.register_model("m", _dist([0.5, 0.5]), artifact=b"x")
    with pytest.raises(VersionMismatch):
        zoo.rank_all(_dist([0.5, 0.5], version=2))


def test_refresh_moves_zoo_to_new_version(tmp_path):
    zoo = _zoo(tmp_path)
    zoo.register_model("good", _dist([0.5, 0.5]), artifact=b"g")
    zoo.register_model("doomed", _dist([0.3, 0.7]), artifact=b"d")

    def recompute(mid):
        if mid == "doomed":
            raise NotFound("training rows gone", model_id=mid)
        return _dist([0.6, 0.4], version=2)

    out = zoo.refresh_distributions(2, recompute)
    assert out["updated"] == 1
    assert out["stale"] == ["doomed"]
    assert "doomed" in out["failures"]
    assert zoo.version == 2
    ranked = zoo.rank_all(_dist([0.6, 0.4], version=2))
    assert [m for m, _ in ranked] == ["good"]
    rec = zoo.recommend(_dist([0.6, 0.4], version=2), threshold=0.5)
    assert rec.excluded == (("doomed", "stale"),)
    # distributions from the old version are no longer comparable
    with pytest.raises(VersionMismatch):
        zoo.rank_all(_dist([0.5, 0.5], version=1))


def test_refresh_requires_newer_version(tmp_path):
    zoo = _zoo(tmp_path)
    zoo.register_model("m", _dist([0.5, 0.5]), artifact=b"x")
    with pytest.raises(VersionMismatch):
        zoo.refresh_distributions(1, lambda mid: _dist([0.5, 0.5]))
    # an empty zoo may adopt any version
    empty = _zoo(tmp_path / "e", version=1)
    out = empty.refresh_distributions(5, lambda mid: None)
    assert out["version"] == 5
    assert empty.version == 5


def test_callback_returning_wrong_version_goes_stale(tmp_path):
    zoo = _zoo(tmp_path)
    zoo.register_model("m", _dist([0.5, 0.5]), artifact=b"x")
    out = zoo.refresh_distributions(2, lambda mid: _dist([0.5, 0.5], version=9))
    assert out["stale"] == ["m"]
    assert zoo.get("m").stale


def test_zoo_survives_reopen(tmp_path):
    zoo = _zoo(tmp_path)
    zoo.register_model("m1", _dist([0.5, 0.5]), artifact=b"bytes-1",
                       metadata={"note": "v1"})
    zoo.register_model("m2", _dist([0.2, 0.8]), artifact_uri="file:///elsewhere")
    again = ModelZoo(tmp_path / "zoo")
    assert again.version == 1
    assert again.stats()["model_ids"] == ["m1", "m2"]
    assert again.get("m1").metadata == {"note": "v1"}
    assert again.artifact_bytes("m1") == b"bytes-1"
    assert again.get("m2").artifact_uri == "file:///elsewhere"


def test_recommendation_payload_shape(tmp_path):
    zoo = _zoo(tmp_path)
    zoo.register_model("m", _dist([0.5, 0.5]), artifact=b"x")
    payload = zoo.recommend(_dist([0.5, 0.5]), threshold=0.5).to_payload()
    assert payload["decision"] == "fine-tune"
    assert payload["ranked"][0]["model_id"] == "m"
    assert payload["chosen"] == "m"
    assert payload["threshold"] == 0.5
    assert payload["excluded"] == []


def test_stats(tmp_path):
    zoo = _zoo(tmp_path)
    assert zoo.stats() == {"models": 0, "stale": 0, "cluster_model_version": 1,
                           "model_ids": []}
    zoo.register_model("m", _dist([0.5, 0.5]), artifact=b"x")
    s = zoo.stats()
    assert s["models"] == 1
    assert s["stale"] == 0
