import json
import subprocess
import sys

import pytest

from hoopt.cli import build_parser, main, smoke_dataset_path
from hoopt.sweep import read_dataset

FAST = "[network]\nsim_duration = 2000\n[model]\nforest.n_trees = 5\ngbt.n_rounds = 20\n[optimizer]\nbudget = 200\nsa_runs = 3\n"


@pytest.fixture
def fast_cfg(tmp_path):
    p = tmp_path / "fast.ini"
    p.write_text(FAST)
    return str(p)


def run(*argv):
    return main([str(a) for a in argv])


def test_simulate_writes_report(fast_cfg, tmp_path, capsys):
    out = tmp_path / "o"
    assert run("--config", fast_cfg, "--out", out, "simulate", "--events") == 0
    text = (out / "simulate.txt").read_text()
    assert text.startswith("# config_sha256=")
    assert "kpi edge_rsrp=" in text and "handovers hos=" in text
    assert (out / "events.csv").read_text().splitlines()[1].startswith("time_ms")
    assert "kpi edge_rsrp=" in capsys.readouterr().out


def test_simulate_byte_identical(fast_cfg, tmp_path):
    for d in ("a", "b"):
        assert run("--config", fast_cfg, "--seed", 1, "--out", tmp_path / d, "simulate") == 0
    assert (tmp_path / "a/simulate.txt").read_bytes() == (tmp_path / "b/simulate.txt").read_bytes()
    assert run("--config", fast_cfg, "--seed", 2, "--out", tmp_path / "c", "simulate") == 0
    assert (tmp_path / "c/simulate.txt").read_bytes() != (tmp_path / "a/simulate.txt").read_bytes()


@pytest.mark.parametrize("cop", ["64,-96,-96,64,11", "64,-96,-96,100,0", "64,-96,-96", "a,b,c,d,e"])
def test_simulate_bad_cop(fast_cfg, tmp_path, cop, capsys):
    assert run("--config", fast_cfg, "--out", tmp_path, "simulate", "--cop", cop) == 2
    assert "configuration error" in capsys.readouterr().err


def test_sweep_subsample(fast_cfg, tmp_path):
    out = tmp_path / "o"
    assert run("--config", fast_cfg, "--out", out, "--jobs", 2, "sweep", "--grid-subsample", 12) == 0
    rows = read_dataset(out / "dataset.csv")
    assert len(rows) == 12
    assert (out / "dataset.csv").read_text().startswith("# config_sha256=")


def test_smoke_dataset_shipped():
    rows = read_dataset(smoke_dataset_path())
    assert len(rows) == 200


def test_train_explain_optimize_report(fast_cfg, tmp_path):
    out = tmp_path / "o"
    base = ("--config", fast_cfg, "--out", out)
    assert run(*base, "train", "--smoke") == 0
    report = [ln for ln in (out / "eval_report.csv").read_text().splitlines() if not ln.startswith("#")]
    assert report[0] == "kind,kpi,rmse" and len(report) == 1 + 15
    doc = json.loads((out / "model.json").read_text())
    assert doc["kind"] == "gbt" and doc["dataset_rows"] == 200
    assert set(doc["bounds"]) == {"edge_rsrp", "hosr", "load_factor"}

    assert run(*base, "explain", "--smoke") == 0
    imp = (out / "importance.csv").read_text().splitlines()
    assert imp[1] == "kpi,feature,mean_abs_shap" and len(imp) == 2 + 15

    assert run(*base, "optimize", "--reference-weights") == 0
    comp = (out / "comparison.csv").read_text().splitlines()
    assert len(comp) == 2 + 4
    for line in comp[2:]:
        f = line.split(",")
        assert float(f[2]) <= float(f[5]) + 1e-12  # median <= brute force
        assert f[7] == "35574"

    assert run(*base, "optimize", "--alpha", 0.9, "--beta", 0.5) == 2

    assert run(*base, "report", "--smoke", "--a3", "64:0", "--a3", "640:10") == 0
    assert (out / "objective_surface.csv").exists() and (out / "coupling.csv").exists()
    surf = [ln for ln in (out / "objective_surface.csv").read_text().splitlines() if not ln.startswith("#")]
    assert len(surf) == 1 + 121


def test_missing_inputs(fast_cfg, tmp_path):
    base = ("--config", fast_cfg, "--out", tmp_path)
    assert run(*base, "train", "--dataset", tmp_path / "nope.csv") == 3
    assert run(*base, "optimize", "--model", tmp_path / "nope.json") == 3
    assert run("--config", tmp_path / "nope.ini", "simulate") == 2


def test_schema_errors(fast_cfg, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    base = ("--config", fast_cfg, "--out", tmp_path)
    assert run(*base, "train", "--dataset", bad) == 4
    junk = tmp_path / "m.json"
    junk.write_text("{")
    assert run(*base, "optimize", "--model", junk) == 4
    tiny = tmp_path / "tiny.csv"
    lines = smoke_dataset_path().read_text().splitlines()
    tiny.write_text("\n".join(lines[:4]) + "\n")  # too few rows to split
    assert run(*base, "train", "--dataset", tiny) == 4


def test_unknown_config_key(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[network]\nwarp_speed = 9\n")
    assert run("--config", p, "simulate") == 2
    assert "warp_speed" in capsys.readouterr().err


def test_console_script_entry_point(fast_cfg, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hoopt.cli", "--config", fast_cfg, "--out", str(tmp_path),
                           "simulate"], capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert "edge_rsrp=" in proc.stdout


def test_weight_preset_alias():
    p = build_parser()
    assert p.parse_args(["optimize", "--table3"]).reference_weights
    assert not p.parse_args(["optimize"]).reference_weights
