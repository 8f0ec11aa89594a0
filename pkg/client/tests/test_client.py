"""SDK behavior: config invariants, format helpers, retry policy, typed errors."""

import json
import socket
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from sigzoo_client import (
    BadRequest,
    ClientConfig,
    ClientConfigError,
    Conflict,
    ConnectionFailed,
    DimensionMismatch,
    FdmsFormatError,
    NotFoundError,
    ServerError,
    ServiceNotReady,
    SigzooClient,
    manifest_for,
    pack_embeddings,
    unpack_embeddings,
)


# -- config -------------------------------------------------------------------


def test_config_invariants():
    cfg = ClientConfig(base_url="http://host:1/")
    assert cfg.base_url == "http://host:1"  # trailing slash stripped
    assert cfg.max_attempts == 3
    with pytest.raises(ClientConfigError):
        ClientConfig(base_url="")
    with pytest.raises(ClientConfigError):
        ClientConfig(base_url="http://host", timeout=0)
    with pytest.raises(ClientConfigError):
        ClientConfig(base_url="http://host", max_attempts=0)
    with pytest.raises(ClientConfigError):
        ClientConfig(base_url="http://host", backoff_base=-1)


def test_backoff_schedule_caps():
    cfg = ClientConfig(base_url="http://host", backoff_base=0.2, backoff_cap=1.0)
    assert [cfg.backoff_for(a) for a in (1, 2, 3, 4)] == [0.2, 0.4, 0.8, 1.0]


# -- binary format helpers -------------------------------------------------------


def test_fdms_round_trip_is_float32_exact():
    rows = [[1.5, -2.25, 3.125], [0.1, 0.2, 0.3]]
    blob = pack_embeddings(rows)
    magic, version, count, dim = struct.unpack_from("<4sIQI", blob, 0)
    assert (magic, version, count, dim) == (b"FDMS", 1, 2, 3)
    back = unpack_embeddings(blob)
    want = [[struct.unpack("<f", struct.pack("<f", x))[0] for x in row]
            for row in rows]
    assert back == want
    assert unpack_embeddings(pack_embeddings(back)) == back  # f32 fixpoint


def test_fdms_rejects_malformed():
    with pytest.raises(FdmsFormatError):
        pack_embeddings([])
    with pytest.raises(FdmsFormatError):
        pack_embeddings([[1.0, 2.0], [3.0]])  # ragged
    with pytest.raises(FdmsFormatError):
        pack_embeddings([[float("nan")]])
    good = pack_embeddings([[1.0, 2.0]])
    with pytest.raises(FdmsFormatError):
        unpack_embeddings(b"XXXX" + good[4:])
    with pytest.raises(FdmsFormatError):
        unpack_embeddings(good[:-1])
    with pytest.raises(FdmsFormatError):
        unpack_embeddings(good[:10])


def test_manifest_shape():
    man = manifest_for(["a", "b"], 4, labels=[b"x", b"y"], sources=["s1", "s2"])
    assert man["count"] == 2 and man["dim"] == 4
    assert man["format"] == "fdms-embeddings"
    assert man["rows"][0] == {"id": "a", "source": "s1", "label": "eA=="}


# -- retry policy against stub servers ----------------------------------------------


class _Script:
    """Per-request scripted responses; records how many arrived."""

    def __init__(self, steps):
        self.steps = steps
        self.hits = 0


def _stub_server(script):
    class Handler(BaseHTTPRequestHandler):
        def _answer(self):
            step = script.steps[min(script.hits, len(script.steps) - 1)]
            script.hits += 1
            status, ctype, body = step
            self.send_response(status)
            self.send_header("content-type", ctype)
            self.send_header("content-length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        do_GET = _answer
        do_POST = _answer

        def log_message(self, *args):
            pass

    server = HTTPServer(("127.0.0.1", 0), Handler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server, f"http://127.0.0.1:{server.server_port}"


def test_connection_refused_retries_then_typed_error():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        dead_port = s.getsockname()[1]
    cfg = ClientConfig(base_url=f"http://127.0.0.1:{dead_port}",
                       timeout=1.0, max_attempts=3, backoff_base=0.0)
    with SigzooClient(cfg) as client:
        with pytest.raises(ConnectionFailed) as err:
            client.status()
    assert err.value.attempts == 3


def test_unstructured_5xx_retries_then_server_error():
    script = _Script([(502, "text/plain", b"bad gateway")])
    server, url = _stub_server(script)
    try:
        cfg = ClientConfig(base_url=url, max_attempts=3, backoff_base=0.0)
        with SigzooClient(cfg) as client:
            with pytest.raises(ServerError) as err:
                client.status()
        assert script.hits == 3
        assert err.value.code == "http-502"
    finally:
        server.shutdown()


def test_retry_recovers_when_server_comes_back():
    ok = json.dumps({"generation": 7}).encode()
    script = _Script([
        (502, "text/plain", b"no"),
        (502, "text/plain", b"no"),
        (200, "application/json", ok),
    ])
    server, url = _stub_server(script)
    try:
        cfg = ClientConfig(base_url=url, max_attempts=3, backoff_base=0.0)
        with SigzooClient(cfg) as client:
            assert client.status() == {"generation": 7}
        assert script.hits == 3
    finally:
        server.shutdown()


def test_structured_errors_are_not_retried():
    body = json.dumps({"error": "not-initialized", "message": "later",
                       "details": {}}).encode()
    script = _Script([(503, "application/json", body)])
    server, url = _stub_server(script)
    try:
        cfg = ClientConfig(base_url=url, max_attempts=5, backoff_base=0.0)
        with SigzooClient(cfg) as client:
            with pytest.raises(ServiceNotReady):
                client.status()
        assert script.hits == 1  # a real answer, no point repeating it
    finally:
        server.shutdown()


# -- typed errors from the real server ------------------------------------------------


def _seed(client, rng_rows):
    client.ingest([
        {"sample_id": f"s{i}", "embedding": row, "label": b"l"}
        for i, row in enumerate(rng_rows)
    ])
    client.force_update(reason="seed")


def test_typed_errors_over_the_wire(live_server):
    import random

    rng = random.Random(0)
    base_url = live_server()
    with SigzooClient(ClientConfig(base_url=base_url)) as client:
        with pytest.raises(ServiceNotReady) as not_ready:
            client.query({"embeddings": [[0.0, 0.0]]})
        assert not_ready.value.status == 503

        rows = [[rng.gauss(cx, 1.0), rng.gauss(cy, 1.0)]
                for cx, cy in ((0, 0), (30, 0), (0, 30)) for _ in range(20)]
        _seed(client, rows)

        with pytest.raises(DimensionMismatch) as dim_err:
            client.query({"embeddings": [[1.0, 2.0, 3.0]]})
        assert "expected 2" in str(dim_err.value)
        assert "got 3" in str(dim_err.value)

        with pytest.raises(NotFoundError):
            client.rank_models("never-queried")

        dist = client.query({"embeddings": rows[:10]}, dataset_id="d0")["pdf"]
        client.register_model("m0", dist, artifact=b"w")
        with pytest.raises(Conflict) as dup:
            client.register_model("m0", dist, artifact=b"w")
        assert dup.value.code == "duplicate-id"

        with pytest.raises(BadRequest) as bad_op:
            client.query({"embeddings": rows[:2]}, ops=["bogus"])
        assert bad_op.value.code == "range-error"


def test_concurrent_calls_share_one_client(live_server):
    import random

    rng = random.Random(1)
    base_url = live_server()
    with SigzooClient(ClientConfig(base_url=base_url, default_seed=3)) as client:
        rows = [[rng.gauss(cx, 1.0), rng.gauss(cy, 1.0)]
                for cx, cy in ((0, 0), (30, 0)) for _ in range(25)]
        _seed(client, rows)

        def call(i):
            if i % 2:
                return client.status()["generation"]
            out = client.query({"embeddings": rows[:5]}, dataset_id=f"c{i}", n=4)
            return len(out["lookup"]["records"])

        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(call, range(32)))
        assert results[1::2] == [1] * 16
        assert results[0::2] == [4] * 16
