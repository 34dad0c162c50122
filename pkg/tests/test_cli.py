import json

import numpy as np
import pytest

from tinyad.cli import main
from tinyad.configs import DatasetConfig, config, dw_cnn, dw_trunk
from tinyad.modelio import save_model
from tinyad.pipeline import synthetic_series, write_csv


@pytest.fixture
def files(tmp_path):
    save_model(dw_cnn(config("SWaT(2)")), tmp_path / "swat2.json")
    save_model(dw_trunk(config("SWaT(2)")), tmp_path / "trunk.json")
    save_model(dw_cnn(DatasetConfig("tiny", (3,), 4, 8, 64, pool=(10,)), seed=2), tmp_path / "tiny.json")
    write_csv(tmp_path / "series.csv", synthetic_series(600, seed=3))
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_plan_prints_patch_fields(files, capsys):
    code, out, _ = run(capsys, "plan", "--model", files / "trunk.json", "--patches", "3", "--no-timestamp")
    assert code == 0
    assert "[0,403), [399,802), [798,1200)" in out


def test_audit_over_budget(files, capsys):
    code, out, _ = run(capsys, "audit", "--model", files / "swat2.json", "--mode", "tinyad", "--patches", "3",
                       "--budget", "65536", "--no-timestamp")
    assert code == 3
    assert "dominant layer 4" in out


def test_run_naive_vs_tinyad(files, capsys):
    outs = {}
    for mode in ("naive", "tinyad"):
        code, out, _ = run(capsys, "run", "--model", files / "swat2.json", "--mode", mode, "--patches", "3",
                           "--json", "-", "--no-timestamp")
        assert code == 0
        outs[mode] = json.loads(out)
    a, b = np.array(outs["naive"]["output"]), np.array(outs["tinyad"]["output"])
    assert np.max(np.abs(a - b)) <= 1e-5
    assert outs["naive"]["measured_peak_bytes"] / outs["tinyad"]["measured_peak_bytes"] >= 2


def test_run_budget_violation(files, capsys):
    code, out, _ = run(capsys, "run", "--model", files / "trunk.json", "--budget", "20000", "--no-timestamp")
    assert code == 3
    assert "at layer 0" in out


def test_run_streaming_and_input_file(files, capsys):
    x = np.random.default_rng(0).standard_normal(1200).astype(np.float32)
    np.save(files / "x.npy", x)
    code, out, _ = run(capsys, "run", "--model", files / "swat2.json", "--input", files / "x.npy", "--stream",
                       "--json", "-", "--no-timestamp")
    assert code == 0
    assert json.loads(out)["param_peak_bytes"] == max(53312, 8448)


def test_reports_are_deterministic(files, capsys):
    argv = ["audit", "--model", files / "swat2.json", "--json", "-", "--no-timestamp"]
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]
    code, out, _ = run(capsys, "audit", "--model", files / "swat2.json", "--json", "-")
    assert "generated" in json.loads(out)


def test_features_subcommand(files, capsys):
    code, out, _ = run(capsys, "features", "--data", files / "series.csv", "--window", "200",
                       "--subwindow", "40", "--stride", "8", "--out", files / "fm.csv", "--no-timestamp")
    assert code == 0
    assert "22 x 21" in out
    rows = (files / "fm.csv").read_text().splitlines()
    assert len(rows) == 23 and rows[1].startswith("min,")


def test_detect_and_evaluate(files, capsys):
    code, out, _ = run(capsys, "detect", "--model", files / "tiny.json", "--data", files / "series.csv",
                       "--mode", "tinyad", "--patches", "3", "--scores-out", files / "scores.csv",
                       "--json", files / "detect.json", "--no-timestamp")
    assert code == 0 and "F1" in out
    report = json.loads((files / "detect.json").read_text())
    assert report["split"] == [360, 60, 180]
    code, out, _ = run(capsys, "evaluate", "--scores", files / "scores.csv", "--threshold",
                       str(report["threshold"]), "--json", "-", "--no-timestamp")
    assert code == 0
    assert json.loads(out)["n_points"] == 600 - 64


def test_simulate(files, capsys):
    code, out, _ = run(capsys, "simulate", "--model", files / "swat2.json", "--mode", "tinyad", "--patches", "3",
                       "--gantt", files / "g.csv", "--fig-dir", files / "figs", "--json", files / "s.json",
                       "--no-timestamp")
    assert code == 0
    assert "simulated, calibrated" in out
    assert (files / "g.csv").read_text().startswith("layer,resource,start,end")
    assert (files / "figs" / "latency_gantt.png").stat().st_size > 0
    report = json.loads((files / "s.json").read_text())
    assert report["multi_ms"] <= report["single_ms"]
    code, out, _ = run(capsys, "simulate", "--reported-row", "SKAB", "--no-timestamp")
    assert code == 0 and "SKAB" in out


def test_figures(files, capsys):
    figs = files / "figs"
    assert run(capsys, "audit", "--model", files / "swat2.json", "--fig-dir", figs, "--no-timestamp")[0] == 0
    assert run(capsys, "plan", "--model", files / "trunk.json", "--patches", "3", "--fig-dir", figs,
               "--no-timestamp")[0] == 0
    assert {p.name for p in figs.iterdir()} == {"memory_per_layer.png", "receptive_fields.png"}


@pytest.mark.parametrize("argv", [
    [],
    ["plan"],
    ["run", "--model", "m.json", "--patches", "0"],
    ["bogus"],
    ["simulate", "--model", "a.json", "--reported-row", "SKAB"],
    ["evaluate", "--scores", "s.csv", "--threshold", "1", "--validation", "v.csv"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err


def test_data_errors(files, capsys):
    code, _, err = run(capsys, "plan", "--model", files / "missing.json")
    assert code == 2 and "missing.json" in err
    (files / "bad.json").write_text('{"format_version": 1, "input_shape": [2, 10], "layers": '
                                    '[{"type": "depthwise_conv", "kernel": [3], "multiplier": 1, '
                                    '"weights": [0, 0, 0, 0, 0], "bias": [0, 0]}]}')
    code, _, err = run(capsys, "audit", "--model", files / "bad.json")
    assert code == 2 and "layer 0" in err
    (files / "bad.csv").write_text("timestamp,value,label\n0,1,0\n0,1,0\n")
    code, _, err = run(capsys, "features", "--data", files / "bad.csv")
    assert code == 2 and "row 3" in err
    code, _, err = run(capsys, "detect", "--model", files / "swat2.json", "--data", files / "series.csv")
    assert code == 2
