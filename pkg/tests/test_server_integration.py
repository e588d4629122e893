"""CLI thin-client mode against a live server process."""

import json
import socket
import subprocess
import sys
import time

import httpx
import pytest
from click.testing import CliRunner

from hqrn.cli import main


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="module")
def server():
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "uvicorn", "hqrn.service.app:app", "--port", str(port)],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    base = f"http://127.0.0.1:{port}"
    try:
        for _ in range(100):
            try:
                if httpx.get(base + "/health", timeout=1.0).status_code == 200:
                    break
            except httpx.HTTPError:
                time.sleep(0.1)
        else:
            pytest.skip("server did not come up")
        yield base
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def test_verify_through_server(server, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 0, "trials_scale": 0.02}))
    out = tmp_path / "out"
    result = CliRunner().invoke(
        main, ["verify", "--config", str(cfg), "--out", str(out), "--server", server]
    )
    assert result.exit_code == 0, result.output
    report = json.loads((out / "report.json").read_text())
    assert report["all_passed"] is True
    assert (out / "metrics.csv").exists()


def test_server_and_local_agree(server, tmp_path):
    cfg_obj = {
        "seed": 4,
        "source": "synthetic",
        "train_count": 40,
        "test_count": 20,
        "state_dim": 8,
        "n_blocks": 1,
        "optimizer": {"epochs": 2, "batch_size": 8},
        "shot_list": [200],
        "quantum_eval_every": 2,
    }
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(cfg_obj))
    runner = CliRunner()
    local = tmp_path / "local"
    remote = tmp_path / "remote"
    assert runner.invoke(main, ["digits", "--config", str(cfg), "--out", str(local)]).exit_code == 0
    assert (
        runner.invoke(
            main, ["digits", "--config", str(cfg), "--out", str(remote), "--server", server]
        ).exit_code
        == 0
    )
    local_rows = (local / "metrics.csv").read_text().splitlines()[1:]
    remote_rows = (remote / "metrics.csv").read_text().splitlines()[1:]
    assert local_rows == remote_rows
