import csv
import json
import math
import os
from pathlib import Path

import pytest

from spiderwalk.cli import ExperimentConfig, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SUB = str(CONFIGS / "subballistic.env")
BALL = str(CONFIGS / "ballistic.env")
SYM = str(CONFIGS / "symmetric.env")
FLAT = str(CONFIGS / "flat.env")
ROPE = str(CONFIGS / "rope2.L")
SINGLE = str(CONFIGS / "single.L")


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _summary(path):
    with open(str(path) + ".json") as fh:
        return json.load(fh)


def test_validate_ok(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["validate", "--env", SUB, "--L", ROPE, "--out", str(out)]) == 0
    s = _summary(out)
    assert 1.55 <= s["kappa"] <= 1.60
    assert s["kappa_over_N"] == pytest.approx(s["kappa"] / 2)
    assert all(r[-1] == "true" for r in _rows(out)[1:])


def test_validate_not_nestling(tmp_path, capsys):
    env = tmp_path / "transient.env"
    env.write_text("delta 0.1\n0.5 0.9\n0.5 0.6\n")
    out = tmp_path / "v.csv"
    assert main(["validate", "--env", str(env), "--out", str(out)]) == 1
    failed = [r[2] for r in _rows(out)[1:] if r[3] == "false"]
    assert failed == ["v"]


def test_validate_not_anchored(tmp_path, capsys):
    bad = tmp_path / "bad.L"
    bad.write_text("N 2\n1 1\n1 2\n")
    assert main(["validate", "--env", SUB, "--L", str(bad)]) == 1
    assert "NotAnchored" in capsys.readouterr().err


def test_runtime_errors_exit_2(tmp_path, capsys):
    assert main(["validate", "--env", str(tmp_path / "missing.env")]) == 2
    assert main(["simulate", "--L", ROPE]) == 2


def test_kappa(capsys):
    assert main(["kappa", "--env", BALL, "--L", ROPE]) == 0
    assert "kappa_over_N" in capsys.readouterr().out
    assert main(["kappa", "--env", SYM]) == 1


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--env", SUB, "--L", ROPE, "--replicas", "40", "--budget", "2000",
            "--checkpoints", "100,1000,2000", "--seed", "5", "--n-boot", "200"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = _rows(a)
    assert rows[0] == ["config_hash", "replica", "t", "S1", "jumps"]
    assert len(rows) == 1 + 40 * 3
    s = _summary(a)
    assert {r[0] for r in rows[1:]} == {s["config_hash"]}
    assert s["checkpoints"] == [100, 1000, 2000]
    assert b"\r\n" not in a.read_bytes()


def test_config_file_and_override(tmp_path):
    cfg = {"env": os.path.relpath(SUB, tmp_path), "L": os.path.relpath(ROPE, tmp_path),
           "replicas": 30, "budget": 500, "seed": 2, "params": {"n_boot": 100}}
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "s.csv"
    assert main(["simulate", "--config", str(path), "--budget", "300", "--out", str(out)]) == 0
    s = _summary(out)
    assert s["config"]["budget"] == 300 and s["config"]["replicas"] == 30
    assert s["config"]["L"] == "N 2\n0 1\n0 2\n"


def test_config_hash_tracks_content():
    a = ExperimentConfig("simulate", env="delta 0.1\n1.0 0.6\n", seed=1)
    b = ExperimentConfig("simulate", env="delta 0.1\n1.0 0.6\n", seed=1)
    c = ExperimentConfig("simulate", env="delta 0.1\n1.0 0.6\n", seed=2)
    assert a.hash == b.hash != c.hash
    assert len(a.hash) == 16


def test_sweep_empty(tmp_path):
    out = tmp_path / "sw.csv"
    assert main(["sweep", "--L", ROPE, "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 1 and rows[0][1] == "cell"


def test_sweep_sorted_and_parallel(tmp_path):
    base = ["sweep", "--L", ROPE, "--cell", BALL, "--cell", SUB, "--replicas", "30",
            "--budget", "1000", "--n-boot", "100"]
    one, two = tmp_path / "one.csv", tmp_path / "two.csv"
    assert main(base + ["--out", str(one)]) == 0
    assert main(base + ["--workers", "2", "--out", str(two)]) == 0
    assert one.read_bytes() == two.read_bytes()
    rows = _rows(one)
    head = rows[0]
    k = [float(r[head.index("kappa_over_N")]) for r in rows[1:]]
    assert k == sorted(k)
    assert [r[head.index("cell")] for r in rows[1:]] == ["1", "0"]


def test_landscape_flat(tmp_path):
    out = tmp_path / "land.csv"
    assert main(["landscape", "--env", FLAT, "--L", SINGLE, "--bypass", "--kappa", "2",
                 "--t", "1000", "--out", str(out)]) == 0
    s = _summary(out)
    assert s["n_valleys"] == 0 and s["Lambda_t"] is False
    assert len(_rows(out)) == 1
    assert main(["landscape", "--env", FLAT, "--L", SINGLE, "--bypass", "--kappa", "2",
                 "--t", "1000", "--gamma2", "2", "--out", str(out)]) == 0
    assert _summary(out)["s0"] == pytest.approx(1000 / (8 * math.log(1000) ** 4))


def test_landscape_drift(tmp_path):
    out = tmp_path / "land.csv"
    assert main(["landscape", "--env", SUB, "--L", ROPE, "--t", "1e6", "--nu", "0.9",
                 "--seed", "3", "--out", str(out)]) == 0
    s = _summary(out)
    assert s["n_valleys"] == len(_rows(out)) - 1
    assert "census" in s or "census_error" in s


def test_gapcheck(tmp_path):
    out = tmp_path / "gap.csv"
    assert main(["gapcheck", "--instances", "25", "--seed", "4", "--out", str(out)]) == 0
    s = _summary(out)
    assert s["violations"] == 0 and s["checked"] > 0
    assert {r[-1] for r in _rows(out)[1:]} <= {"ok", "trivial"}
    wide = tmp_path / "wide.csv"
    assert main(["gapcheck", "--instances", "10", "--seed", "4", "--inflate", "1",
                 "--out", str(wide)]) == 0
    assert _summary(wide)["violations"] == 0
    assert _summary(wide)["config"]["params"]["inflate"] == 1


def test_transience(tmp_path):
    out = tmp_path / "tr.csv"
    assert main(["transience", "--env", BALL, "--L", ROPE, "--seeds", "5",
                 "--out", str(out)]) == 0
    assert _summary(out)["converged"] == 5
    assert main(["transience", "--env", SYM, "--L", SINGLE, "--seeds", "3"]) == 1
    assert main(["transience", "--env", SYM, "--L", SINGLE, "--seeds", "3", "--bypass",
                 "--out", str(out)]) == 0
    assert _summary(out)["converged"] == 0


def test_regenerate_byte_identical(tmp_path):
    out, again = tmp_path / "s.csv", tmp_path / "again.csv"
    assert main(["simulate", "--env", BALL, "--L", ROPE, "--replicas", "30", "--budget", "800",
                 "--n-boot", "100", "--out", str(out)]) == 0
    assert main(["regenerate", str(out), "--out", str(again)]) == 0
    assert out.read_bytes() == again.read_bytes()


def test_regenerate_rejects_tampering(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["kappa", "--env", BALL, "--out", str(out)]) == 0
    side = json.loads(Path(str(out) + ".json").read_text())
    side["config"]["seed"] = 99
    Path(str(out) + ".json").write_text(json.dumps(side))
    assert main(["regenerate", str(out), "--out", str(tmp_path / "x.csv")]) == 1
    assert main(["regenerate", str(out)]) == 2
