import json
import shutil
import socket
import subprocess
import sys

import pytest

from puflab.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def last_json(text):
    return json.loads(text.strip().splitlines()[-1])


@pytest.fixture
def dbdir(tmp_path, capsys):
    db = tmp_path / "db"
    assert run(capsys, "fabric", "init", "--db", db)[0] == 0
    assert run(capsys, "chip", "new", "--db", db, "--chip-seed", 7)[0] == 0
    return db


def test_enroll_and_verify(dbdir, capsys):
    code, out, _ = run(capsys, "enroll", "--db", dbdir, "--chip", "chip-7", "--layouts", 10, "--mchallenges", 100,
                       "--noiseless")
    assert code == 0
    summary = last_json(out)
    assert summary["entries"] == 10 and summary["template_bits"] == [100] * 10
    code, out, _ = run(capsys, "verify", "--db", dbdir, "--chip", "chip-7", "--noiseless")
    assert code == 0
    assert last_json(out) == {"type": "result", "accepted": True, "hamming_distance": 0}


def test_env_fallback_and_rejection(dbdir, capsys, monkeypatch):
    monkeypatch.setenv("PUFLAB_DB", str(dbdir))
    assert run(capsys, "chip", "new", "--chip-seed", 8)[0] == 0
    assert run(capsys, "enroll", "--chip", "chip-7", "--layouts", 1)[0] == 0
    # chip-8 answering for chip-7 is an impostor
    device = dbdir / "devices" / "chip-8.json"
    data = json.loads(device.read_text())
    data["chip_id"] = "chip-7"
    (dbdir / "devices" / "fake.json").write_text(json.dumps(data))
    code, out, _ = run(capsys, "verify", "--chip", "fake")
    assert code == 8 and last_json(out)["accepted"] is False
    code, _, err = run(capsys, "verify", "--chip", "chip-7")
    assert code == 6 and json.loads(err)["error"] == "depleted"


@pytest.mark.parametrize("argv, code, error", [
    (["bogus"], 2, "usage_error"),
    (["enroll", "--layouts", "x"], 2, "usage_error"),
    (["verify", "--chip", "a"], 3, "config_error"),
])
def test_usage_errors(argv, code, error, capsys, monkeypatch):
    monkeypatch.delenv("PUFLAB_DB", raising=False)
    got, out, err = run(capsys, *argv)
    assert got == code and json.loads(err)["error"] == error and out == ""


def test_missing_db_and_bad_config(tmp_path, dbdir, capsys):
    code, _, err = run(capsys, "verify", "--db", tmp_path / "nothing", "--chip", "a")
    assert code == 4 and json.loads(err)["error"] == "not_found"
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    code, _, err = run(capsys, "report", "farfrr", "--config", bad)
    assert code == 3 and json.loads(err)["error"] == "config_error"
    bad.write_text('{"colour": 1}')
    assert run(capsys, "report", "farfrr", "--config", bad)[0] == 3
    bad.write_text('{"layouts": 0}')
    assert run(capsys, "enroll", "--db", dbdir, "--chip", "chip-7", "--config", bad)[0] == 3


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"threshold": 5, "length": 50}))
    out = last_json(run(capsys, "report", "farfrr", "--config", cfg)[1])
    assert out["threshold"] == 5 and out["header"]["config_hash"]
    out2 = last_json(run(capsys, "report", "farfrr", "--config", cfg, "--threshold", 7)[1])
    assert out2["threshold"] == 7
    default = last_json(run(capsys, "report", "farfrr")[1])
    assert default["threshold"] == 12
    assert default["far"] == pytest.approx(2.43e-5, rel=0.01)


def test_farfrr_csv(tmp_path, capsys):
    assert run(capsys, "report", "farfrr", "--out", tmp_path, "--strict")[0] == 0
    lines = (tmp_path / "farfrr.csv").read_text().splitlines()
    assert lines[0].startswith("# ") and any(l.startswith("# version") for l in lines)
    assert "t,far,frr" in lines


def test_attack_round_trip(dbdir, tmp_path, capsys):
    out = tmp_path / "run"
    code, text, _ = run(capsys, "attack", "train", "--db", dbdir, "--chip", "chip-7", "--layout-seed", 3,
                        "--crps", 2000, "--out", out)
    assert code == 0
    model = out / "model.json"
    assert isinstance(json.loads(model.read_text()), list)
    meta = json.loads((out / "model.json.meta.json").read_text())
    assert meta["header"]["tool"] == "puflab" and meta["n_stages"] == 64
    code, text, _ = run(capsys, "attack", "eval", "--db", dbdir, "--chip", "chip-7", "--model", model)
    assert code == 0 and last_json(text)["prediction_error"] <= 0.05
    assert run(capsys, "report", "delaydist", "--model", model, "--out", out)[0] == 0
    assert (out / "delaydist.csv").read_text().startswith("# ")
    code, text, _ = run(capsys, "mselect", "--db", dbdir, "--layout", out / "model.json.layout.json",
                        "--method", "model-based", "--model", model, "--out", out)
    assert code == 0 and last_json(text)["count"] > 0


def test_reproducible_outputs(dbdir, tmp_path, capsys):
    texts = []
    for name in ("a", "b"):
        run(capsys, "layout", "new", "--db", dbdir, "--layout-seed", 4, "--out", tmp_path / name)
        layout = next((tmp_path / name).glob("layout-*.json"))
        assert run(capsys, "mselect", "--db", dbdir, "--chip", "chip-7", "--layout", layout, "--candidates", 5000,
                   "--out", tmp_path / name)[0] == 0
        texts.append(next((tmp_path / name).glob("mchallenges-*.json")).read_text())
    assert texts[0] == texts[1]
    assert json.loads(texts[0])["header"]["seeds"] == {"seed": 0}


def test_reports(dbdir, tmp_path, capsys):
    code, out, _ = run(capsys, "report", "bias", "--db", dbdir, "--chip", "chip-7", "--layouts", 2,
                       "--challenges", 5000)
    assert code == 0 and len(last_json(out)["bias"]) == 2
    code, out, _ = run(capsys, "report", "noise", "--db", dbdir, "--chip", "chip-7", "--layouts", 2,
                       "--candidates", 5000)
    assert code == 0 and 0 <= last_json(out)["total_noise"] <= 0.5
    code, out, _ = run(capsys, "report", "uniqueness", "--db", dbdir, "--chips", 3, "--layouts", 1,
                       "--out", tmp_path)
    stats = last_json(out)
    assert code == 0 and stats["sample_count"] == 3
    assert (tmp_path / "uniqueness_histogram.csv").exists()


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_serve_and_device_processes(dbdir, tmp_path, capsys):
    assert run(capsys, "enroll", "--db", dbdir, "--chip", "chip-7", "--layouts", 2)[0] == 0
    local = tmp_path / "local"
    shutil.copytree(dbdir, local)
    port = _free_port()
    server = subprocess.Popen([sys.executable, "-m", "puflab", "serve", "--db", str(dbdir),
                               "--listen", f"127.0.0.1:{port}"], stderr=subprocess.PIPE)
    try:
        assert json.loads(server.stderr.readline())["listening"].endswith(str(port))
        device = subprocess.run([sys.executable, "-m", "puflab", "device", "--db", str(dbdir), "--chip", "chip-7",
                                 "--connect", f"127.0.0.1:{port}", "--transcript", str(tmp_path / "tcp.txt")],
                                capture_output=True, text=True, timeout=60)
    finally:
        server.terminate()
        server.wait(timeout=10)
    assert device.returncode == 0, device.stderr
    assert run(capsys, "verify", "--db", local, "--chip", "chip-7", "--transcript", tmp_path / "local.txt")[0] == 0
    assert (tmp_path / "tcp.txt").read_bytes() == (tmp_path / "local.txt").read_bytes()


def test_serve_stdio(dbdir, capsys):
    run(capsys, "enroll", "--db", dbdir, "--chip", "chip-7", "--layouts", 1)
    proc = subprocess.run([sys.executable, "-m", "puflab", "serve", "--db", str(dbdir), "--stdio"],
                          input=b'{"type":"hello"}\n{"type":"auth_request","chip_id":"chip-7"}\n',
                          capture_output=True, timeout=60)
    replies = [json.loads(l) for l in proc.stdout.splitlines()]
    assert proc.returncode == 0
    assert replies[0]["type"] == "error" and replies[1]["type"] == "challenge"


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
