import json

import numpy as np
import pytest

from corrscan.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from corrscan.io import read_csv, read_pgm, write_csv


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--width", "32", "--height", "32", "--shape", "rect:10x10", "--rho", "0.9",
                 "--seed", "2", "--out-dir", str(d / "sig")]) == EXIT_OK
    assert main(["calibrate", "--width", "32", "--height", "32", "--B", "100", "--seed", "1",
                 "--out", str(d / "null.json")]) == EXIT_OK
    return d


def test_simulate_outputs(fixture_dir):
    truth = json.loads((fixture_dir / "sig" / "truth.json").read_text())
    assert truth["size"] == 100 and truth["rho"] == 0.9 and "manifest" in truth
    x = read_csv(fixture_dir / "sig" / "x.csv")
    assert x.shape == (32, 32)


def test_simulate_pgm(tmp_path):
    assert main(["simulate", "--width", "20", "--height", "10", "--rho", "0", "--shape", "rect:4x4",
                 "--format", "pgm", "--out-dir", str(tmp_path)]) == EXIT_OK
    a = read_pgm(tmp_path / "x.pgm")
    assert a.shape == (10, 20) and a.max() == 65535 and a.min() == 0


def test_scan_with_calibration(fixture_dir, tmp_path):
    out = tmp_path / "rep.json"
    assert main(["scan", "--x", str(fixture_dir / "sig" / "x.csv"), "--y", str(fixture_dir / "sig" / "y.csv"),
                 "--calib", str(fixture_dir / "null.json"), "--out", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    truth = json.loads((fixture_dir / "sig" / "truth.json").read_text())
    assert rep["outcome"]["reject"] is True
    assert rep["outcome"]["p_value"] == pytest.approx(1 / 101)
    assert rep["report"]["region"]["params"] == truth["shape"]["params"]
    m = rep["manifest"]
    assert m["command"] == "scan" and set(m["inputs"]) == {"x", "y", "calib"} and len(m["config_hash"]) == 64


def test_calibrate_rerun_identical(fixture_dir, tmp_path):
    out = tmp_path / "again.json"
    assert main(["calibrate", "--width", "32", "--height", "32", "--B", "100", "--seed", "1",
                 "--out", str(out)]) == EXIT_OK
    a = json.loads(out.read_text())["values"]
    b = json.loads((fixture_dir / "null.json").read_text())["values"]
    assert a == b


def test_exit_codes(fixture_dir, tmp_path, capsys):
    sig = fixture_dir / "sig"
    assert main(["calibrate", "--width", "8", "--height", "8", "--B", "50"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["power", "--study", "table9"]) == EXIT_USAGE
    assert main(["scan", "--x", str(tmp_path / "nope.csv"), "--y", str(sig / "y.csv")]) == EXIT_DATA
    bad = tmp_path / "small.csv"
    write_csv(bad, np.zeros((4, 4)))
    assert main(["scan", "--x", str(bad), "--y", str(sig / "y.csv")]) == EXIT_DATA
    # calibration for another lattice is refused
    other = tmp_path / "n16.json"
    assert main(["calibrate", "--width", "16", "--height", "16", "--B", "100", "--out", str(other)]) == EXIT_OK
    assert main(["scan", "--x", str(sig / "x.csv"), "--y", str(sig / "y.csv"), "--calib", str(other)]) == EXIT_DATA
    # calibration for another statistic is a usage error
    assert main(["scan", "--x", str(sig / "x.csv"), "--y", str(sig / "y.csv"), "--stat", "full",
                 "--calib", str(fixture_dir / "null.json")]) == EXIT_USAGE


def test_scan_otsu_and_mask(fixture_dir, tmp_path):
    sig = fixture_dir / "sig"
    mask = np.ones((32, 32))
    mask[:, :4] = 0
    write_csv(tmp_path / "m.csv", mask)
    out = tmp_path / "m.json"
    assert main(["scan", "--x", str(sig / "x.csv"), "--y", str(sig / "y.csv"), "--mask", str(tmp_path / "m.csv"),
                 "--stat", "full", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["domain"]["active"] == 32 * 28
    x = np.zeros((32, 32))
    x[8:24, 8:24] = 100 + np.random.default_rng(0).normal(size=(16, 16))
    y = x + np.random.default_rng(1).normal(size=(32, 32))
    write_csv(tmp_path / "ox.csv", x)
    write_csv(tmp_path / "oy.csv", y)
    assert main(["scan", "--x", str(tmp_path / "ox.csv"), "--y", str(tmp_path / "oy.csv"), "--otsu",
                 "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["domain"]["active"] < 32 * 32


def test_power_and_bench(tmp_path):
    out = tmp_path / "p.csv"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"study": "region-size", "domains": [[16, 16]], "shapes": ["rect:3x3", "rect:5x5"],
                               "rhos": [0.6], "methods": ["T~*"], "runs": 100, "B": 100}))
    assert main(["power", "--study", "figure4", "--config", str(cfg), "--out", str(out),
                 "--figure-data", str(tmp_path / "fig.csv")]) == EXIT_OK
    header = out.read_text().splitlines()[0]
    assert header.startswith("study,shape,domain,size,rho,method,power")
    assert (tmp_path / "fig.csv").exists() and out.with_suffix(".json").exists()
    bench = tmp_path / "b.csv"
    assert main(["bench", "--sizes", "16,24x16", "--out", str(bench)]) == EXIT_OK
    summary = json.loads(bench.with_suffix(".json").read_text())
    assert set(summary["speedups"]) == {"16x16", "24x16"}
