import json
import socket
import subprocess
import sys
import time

import pytest

from streamsky.cli import main


def test_keygen_grant_and_frames(tmp_path, capsys):
    owner = tmp_path / "owner.json"
    assert main(["keygen", "--seed", "cli", "--stream", "s1", "--window-sizes", "5", "--out", str(owner)]) == 0
    doc = json.loads(owner.read_text())
    assert doc["stream"] == "s1" and list(doc["window_secrets"]) == ["5"]
    rc = main(["grant", "--owner", str(owner), "--user", "alice", "--policy", "window:9,5",
               "--cloud-out", str(tmp_path / "a.cloud"), "--user-out", str(tmp_path / "a.key")])
    assert rc == 0
    assert json.loads(owner.read_text())["policies"] == {"s1/window:9,5": "window:9,5"}
    # an unsupported window size is a clean error, not a traceback
    rc = main(["grant", "--owner", str(owner), "--user", "bob", "--policy", "window:0,3",
               "--cloud-out", str(tmp_path / "b.cloud"), "--user-out", str(tmp_path / "b.key")])
    assert rc == 2
    assert "window size 3" in capsys.readouterr().err


def test_bad_owner_file(tmp_path):
    (tmp_path / "x.json").write_text("{}")
    assert main(["grant", "--owner", str(tmp_path / "x.json"), "--user", "u", "--policy", "ge:1",
                 "--cloud-out", str(tmp_path / "c"), "--user-out", str(tmp_path / "k")]) == 2


def test_simulate(tmp_path, capsys):
    sc = {"seed": "cli-sim", "streams": [{"id": "s", "window_sizes": [2], "start": 0, "count": 20}],
          "policies": [{"id": "p", "stream": "s", "policy": "window:0,2"}],
          "users": [{"id": "u", "policies": ["p"]}]}
    path = tmp_path / "sc.json"
    path.write_text(json.dumps(sc))
    assert main(["simulate", "--scenario", str(path)]) == 0
    out = capsys.readouterr().out
    assert "oracle: 0 missing, 0 extra" in out and "outputs=10" in out


def test_bench_crypto_and_csv(tmp_path, capsys):
    csv_path = tmp_path / "b.csv"
    assert main(["bench", "crypto", "--reps", "5", "--csv", str(csv_path)]) == 0
    out = capsys.readouterr().out
    assert "[PASS] eq transform pairings == width" in out
    assert csv_path.read_text().startswith("backend,kernels,operation")


def test_bench_policies(capsys):
    assert main(["bench", "policies", "--policies", "1,50", "--requests", "20"]) == 0
    assert "policies=50" in capsys.readouterr().out


def test_usage_errors():
    with pytest.raises(SystemExit):
        main(["grant", "--policy", "sideways:3"])
    with pytest.raises(SystemExit):
        main([])


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_multi_process_run(tmp_path):
    exe = [sys.executable, "-m", "streamsky"]
    owner = str(tmp_path / "owner.json")
    run = lambda *a: subprocess.run(exe + list(a), check=True, capture_output=True, text=True, timeout=60)
    run("keygen", "--seed", "mp", "--stream", "s1", "--window-sizes", "5", "--out", owner)
    run("grant", "--owner", owner, "--user", "alice", "--policy", "window:0,5",
        "--cloud-out", str(tmp_path / "a.cloud"), "--user-out", str(tmp_path / "a.key"))
    port = str(_free_port())
    cloud = subprocess.Popen(exe + ["cloud", "run", "--seed", "mp", "--listen", f"127.0.0.1:{port}",
                                    "--max-seconds", "20"], stdout=subprocess.PIPE, text=True)
    try:
        assert "listening" in cloud.stdout.readline()
        user = subprocess.Popen(exe + ["user", "run", "--seed", "mp", "--key", str(tmp_path / "a.key"),
                                       "--connect", f"127.0.0.1:{port}", "--count", "3"],
                                stdout=subprocess.PIPE, text=True)
        owner_run = run("owner", "run", "--owner", owner, "--grants", str(tmp_path / "a.cloud"),
                        "--connect", f"127.0.0.1:{port}", "--count", "15", "--value", "10")
        assert "published 15 tuples" in owner_run.stdout
        out, _ = user.communicate(timeout=30)
        assert out.count("average=10") == 3
    finally:
        cloud.kill()
        cloud.wait()
