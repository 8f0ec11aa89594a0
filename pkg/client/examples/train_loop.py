"""A complete training-loop round trip against a running server.

    python3 examples/train_loop.py http://127.0.0.1:8472

Ingests labeled data, forces a fit, queries with a fresh batch, stands in
for an external fine-tuning job, registers the resulting model with the
batch's own signature, and shows the next query recommending it.
"""

import hashlib
import random
import sys

from sigzoo_client import ClientConfig, SigzooClient

CENTERS = [(0.0, 0.0), (25.0, 0.0), (0.0, 25.0)]


def blob_batch(rng, per_center):
    rows, labels = [], []
    for c, (cx, cy) in enumerate(CENTERS):
        for _ in range(per_center):
            rows.append([rng.gauss(cx, 1.0), rng.gauss(cy, 1.0)])
            labels.append(f"class-{c}".encode())
    return rows, labels


def main(base_url):
    rng = random.Random(7)
    with SigzooClient(ClientConfig(base_url=base_url, default_seed=7)) as client:
        rows, labels = blob_batch(rng, 30)
        out = client.ingest([
            {"sample_id": f"seed-{i}", "embedding": row, "label": labels[i]}
            for i, row in enumerate(rows)
        ])
        print("ingested:", out)
        print("fit:", client.force_update(reason="example-bootstrap"))

        batch, _ = blob_batch(rng, 8)
        answer = client.query({"embeddings": batch}, dataset_id="loop-1", n=12)
        lookup = answer["lookup"]
        print(f"matched {len(lookup['records'])} records,",
              f"split {lookup['per_cluster_counts']},",
              f"certainty {answer['certainty']['certainty']:.1f}%")
        print("recommendation:", answer["recommendation"]["decision"])

        # stand-in for the external fine-tune: any bytes make an artifact
        weights = hashlib.sha256(repr(batch).encode()).digest()
        registered = client.register_model(
            "loop-1-model",
            answer["pdf"],
            artifact=weights,
            metadata={"trained_on": "loop-1"},
            training_ref=[r["sample_id"] for r in lookup["records"]],
        )
        print("registered:", registered)

        again = client.query({"embeddings": batch}, dataset_id="loop-2")
        rec = again["recommendation"]
        print(f"next round: {rec['decision']} from {rec['chosen']}",
              f"(jsd {rec['ranked'][0]['jsd']:.4f})")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "http://127.0.0.1:8472")
