"""Fixtures that run the real server as a subprocess.

The SDK is exercised purely over the wire: every server here is the
installed ``sigzoo serve`` entry point on a fresh data directory and a
free TCP port, never an in-process test client.
"""

import socket
import subprocess
import time

import httpx
import pytest


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def live_server(tmp_path):
    """Factory returning the base URL of a freshly started server process."""
    procs = []

    def start(**overrides):
        port = _free_port()
        cfg = {
            "data_dir": str(tmp_path / f"data-{len(procs)}"),
            "embed_dim": 2,
            "k_min": 2,
            "k_max": 8,
            "listen_host": "127.0.0.1",
            "listen_port": port,
            "seed": 0,
        }
        cfg.update(overrides)
        cfg_path = tmp_path / f"server-{len(procs)}.yaml"
        cfg_path.write_text("".join(f"{k}: {v}\n" for k, v in cfg.items()))
        log = open(tmp_path / f"server-{len(procs)}.log", "w")
        proc = subprocess.Popen(
            ["sigzoo", "--config", str(cfg_path), "serve"],
            stdout=log, stderr=subprocess.STDOUT,
        )
        procs.append((proc, log))
        base_url = f"http://127.0.0.1:{port}"
        deadline = time.monotonic() + 20.0
        while time.monotonic() < deadline:
            if proc.poll() is not None:
                log.flush()
                raise RuntimeError(
                    "server died during startup:\n"
                    + (tmp_path / f"server-{len(procs) - 1}.log").read_text()
                )
            try:
                if httpx.get(base_url + "/v1/status", timeout=1.0).status_code == 200:
                    return base_url
            except httpx.TransportError:
                time.sleep(0.1)
        raise RuntimeError("server did not come up within 20s")

    yield start
    for proc, log in procs:
        proc.terminate()
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
        log.close()
