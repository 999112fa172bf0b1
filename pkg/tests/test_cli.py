import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from bdlle import benchmark
from bdlle.benchmark import (ConfigError, DetectorSpec, RunConfig, StageError, emit_plot_data,
                             run_benchmark, table_config)
from bdlle.cli import main, read_ground_truth
from bdlle.datasets import sample_disk, sample_klein
from bdlle.indicator import run_bdlle
from bdlle.pointcloud import NeighborParams, load_cloud


def tree_digest(root):
    root = Path(root)
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def small_config(out_dir, **kw):
    return RunConfig(datasets=[{"name": "disk", "n": 400, "mode": "uniform"}],
                     detectors=[{"algo": "bdlle", "options": {}},
                                {"algo": "border", "options": {"k": 15}},
                                {"algo": "cps", "options": {"epsilon": 0.25}}],
                     seed=3, out_dir=str(out_dir), **kw)


def test_config_round_trip(tmp_path):
    cfg = small_config(tmp_path / "r", dm={"epsilon": 0.3, "ell": 3, "n_max": None})
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()
    cfg.save(tmp_path / "c.json")
    assert RunConfig.load(tmp_path / "c.json") == cfg
    t = table_config()
    assert RunConfig.from_json(t.to_json()) == t


@pytest.mark.parametrize("mutation", [
    {"datasets": [{"name": "disk", "n": 0}]},
    {"datasets": [{"name": "cube"}]},
    {"datasets": []},
    {"detectors": [{"algo": "alpha"}]},
    {"schema_version": 99},
    {"grid_k": 0},
    {"dm": {"epsilon": -1}},
])
def test_config_validation(tmp_path, mutation):
    data = json.loads(small_config(tmp_path).to_json())
    data.update(mutation)
    with pytest.raises(ConfigError):
        RunConfig.from_json(json.dumps(data))


def test_invalid_config_runs_nothing(tmp_path):
    cfg = small_config(tmp_path / "out")
    cfg.datasets[0]["n"] = 0
    with pytest.raises(ConfigError):
        run_benchmark(cfg)
    assert not (tmp_path / "out").exists()


def test_detector_spec_parse():
    spec = DetectorSpec.parse("bdlle:epsilon=0.2,reg=auto,threshold-frac=0.4,label=mine")
    assert spec.options == {"epsilon": 0.2, "reg": "auto", "threshold_frac": 0.4, "label": "mine"}
    assert spec.label() == "mine"
    assert DetectorSpec.parse("border:k=50").options == {"k": 50}
    with pytest.raises(ConfigError):
        DetectorSpec.parse("border:k")
    with pytest.raises(ConfigError):
        DetectorSpec.parse("nope")


def test_benchmark_deterministic(tmp_path):
    run_benchmark(small_config(tmp_path / "a"))
    run_benchmark(small_config(tmp_path / "b"), workers=3)
    a, b = tree_digest(tmp_path / "a"), tree_digest(tmp_path / "b")
    a.pop("config.json"), b.pop("config.json")
    assert a == b
    names = set(a)
    assert {"results.json", "table.csv", "table.txt", "disk/bdlle.json", "disk/cps.plot.csv"} <= names
    table = (tmp_path / "a" / "table.csv").read_text().splitlines()
    assert table[0] == "detector,disk" and len(table) == 4


def test_stage_error_flags_partial_output(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(benchmark, "_bdlle", boom)
    with pytest.raises(StageError) as err:
        run_benchmark(small_config(tmp_path / "x"))
    assert err.value.stage == "detect:disk/bdlle"
    assert "detect:disk/bdlle" in (tmp_path / "x" / "INCOMPLETE").read_text()


def test_plot_data_layouts():
    disk = sample_disk(200, 1)
    rep = run_bdlle(disk.cloud, NeighborParams.knn(12), 2)
    lines = emit_plot_data(rep, disk).splitlines()
    assert lines[0] == "x,y,B,detected" and len(lines) == 201
    klein = sample_klein(150, 1)
    lines = emit_plot_data(type("R", (), {"boundary_indices": np.array([0, 3])})(), klein).splitlines()
    assert lines[0] == "theta,phi,detected" and len(lines) == 151
    assert lines[1].endswith(",1") and lines[2].endswith(",0")


# ---------------------------------------------------------------- subcommands
def run(args, capsys=None):
    code = main([str(a) for a in args])
    return code


def test_sample_detect_eval_chain(tmp_path, capsys):
    cloud = tmp_path / "d.csv"
    assert run(["sample", "--name", "disk", "--n", 600, "--seed", 2, "--out", cloud]) == 0
    gt = read_ground_truth(tmp_path / "d.gt.csv")
    assert gt.size == 600 and load_cloud(cloud).n == 600
    det = tmp_path / "det.json"
    assert run(["detect", "--dim", 2, "--in", cloud, "--out", det]) == 0
    payload = json.loads(det.read_text())
    assert {"n", "params", "c", "threshold", "B", "boundary_indices"} <= set(payload)
    ev = tmp_path / "ev.json"
    assert run(["eval", "--detected", det, "--gt", tmp_path / "d.gt.csv", "--grid-k", 10,
                "--out", ev]) == 0
    report = json.loads(ev.read_text())
    assert len(report["per_r"]) == 10 and 0 < report["f1_max"] <= 1
    # detect is deterministic
    det2 = tmp_path / "det2.json"
    run(["detect", "--dim", 2, "--in", cloud, "--out", det2])
    assert det.read_bytes() == det2.read_bytes()
    knn = tmp_path / "knn.json"
    assert run(["detect", "--scheme", "knn", "--k", 20, "--dim", 2, "--reg", "0.001",
                "--threshold-frac", 0.4, "--in", cloud, "--out", knn]) == 0
    assert json.loads(knn.read_text())["c_provenance"] == "explicit"


def test_sample_noisy_writes_clean(tmp_path):
    out = tmp_path / "noisy.csv"
    assert run(["sample", "--name", "noisy-disk", "--n", 200, "--sigma", 0.05, "--out", out]) == 0
    assert (tmp_path / "noisy.clean.csv").exists()
    assert load_cloud(out).p == 500


def test_baseline_and_cps_eval(tmp_path):
    cloud = tmp_path / "d.csv"
    run(["sample", "--name", "disk", "--n", 500, "--out", cloud])
    out = tmp_path / "b.json"
    assert run(["baseline", "--algo", "band", "--k", 15, "--in", cloud, "--out", out]) == 0
    assert json.loads(out.read_text())["name"] == "band"
    cps = tmp_path / "cps.json"
    assert run(["baseline", "--algo", "cps", "--epsilon", 0.25, "--dim", 2, "--in", cloud,
                "--out", cps]) == 0
    assert "detections" in json.loads(cps.read_text())
    ev = tmp_path / "ev.json"
    assert run(["eval", "--detected", cps, "--gt", tmp_path / "d.gt.csv", "--out", ev]) == 0
    assert json.loads(ev.read_text())["detector"] == "cps"
    fixed = tmp_path / "cps_r.json"
    assert run(["baseline", "--algo", "cps", "--epsilon", 0.25, "--dim", 2, "--radius", 0.1,
                "--in", cloud, "--out", fixed]) == 0
    assert json.loads(fixed.read_text())["params"]["radius"] == 0.1


def test_csv_detection_list(tmp_path):
    cloud = tmp_path / "d.csv"
    run(["sample", "--name", "disk", "--n", 100, "--out", cloud])
    det = tmp_path / "alpha.csv"
    det.write_text("0\n5\n9\n")
    assert run(["eval", "--detected", det, "--gt", tmp_path / "d.gt.csv",
                "--out", tmp_path / "e.json"]) == 0


def test_dm_subcommand(tmp_path):
    cloud = tmp_path / "d.csv"
    run(["sample", "--name", "disk", "--n", 300, "--out", cloud])
    out = tmp_path / "emb.csv"
    assert run(["dm", "--epsilon-dm", 0.2, "--l", 3, "--in", cloud, "--out", out]) == 0
    assert load_cloud(out).points.shape == (300, 3)
    meta = json.loads((tmp_path / "emb.json").read_text())
    assert abs(meta["eigenvalues"][0]) < 1e-8


def test_pipeline_and_report(tmp_path, capsys):
    out = tmp_path / "pipe"
    assert run(["pipeline", "--name", "noisy-disk", "--n", 400, "--dm-epsilon", 0.2,
                "--detector", "bdlle", "--detector", "border:k=20", "--grid-k", 8,
                "--out-dir", out]) == 0
    text = capsys.readouterr().out
    assert "noisy-disk" in text and "border" in text
    assert run(["report", "--run-dir", out, "--csv", tmp_path / "t.csv"]) == 0
    assert (tmp_path / "t.csv").read_text().startswith("detector,noisy-disk")
    cfg = RunConfig.load(out / "config.json")
    cfg.out_dir = str(tmp_path / "pipe2")
    cfg.save(tmp_path / "c.json")
    assert run(["pipeline", "--config", tmp_path / "c.json"]) == 0
    a, b = tree_digest(out), tree_digest(tmp_path / "pipe2")
    a.pop("config.json"), b.pop("config.json")
    assert a == b


@pytest.mark.parametrize("args", [
    ["sample", "--name", "disk", "--n", 0, "--out", "x.csv"],
    ["sample", "--name", "torus", "--out", "x.csv"],
    ["detect", "--dim", 2, "--in", "missing.csv"],
    ["pipeline"],
    ["report", "--run-dir", "nowhere"],
    ["frobnicate"],
])
def test_config_errors_exit_2(tmp_path, monkeypatch, args):
    monkeypatch.chdir(tmp_path)
    assert run(args) == 2


def test_runtime_error_exit_3(tmp_path):
    cloud = tmp_path / "two.csv"
    cloud.write_text("0,0\n5,5\n")
    assert run(["detect", "--dim", 2, "--epsilon", 0.1, "--in", cloud]) == 3
    cfg = tmp_path / "c.json"
    RunConfig(datasets=[{"name": "disk", "n": 50}],
              detectors=[{"algo": "bdlle", "options": {"epsilon": 1e-6}}],
              out_dir=str(tmp_path / "o")).save(cfg)
    assert run(["pipeline", "--config", cfg]) == 3
    assert (tmp_path / "o" / "INCOMPLETE").exists()
