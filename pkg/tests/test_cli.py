import json

import pytest
from click.testing import CliRunner

from molink.bench import load_csv
from molink.channel import load_trace
from molink.cli import cli


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.setenv("MOLINK_OUTPUT_DIR", str(tmp_path))
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(cli, [str(a) for a in args], catch_exceptions=False)

    return invoke


def test_simulate_writes_csv_and_sidecar(run, tmp_path):
    res = run("simulate", "--bits", "1111010110", "--t-s", "0.5", "--seed", "3", "--lead-in", "2")
    assert res.exit_code == 0, res.output
    trace, side = load_trace(tmp_path / "trace.csv")
    assert len(trace) == 4 * 10 + 2 and trace.origin_sample == 2
    assert side["meta"]["bits"] == [1, 1, 1, 1, 0, 1, 0, 1, 1, 0] and side["seed"] == 3


def test_config_file_and_flag_override(run, tmp_path):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"t_s": 2.0, "n_bits": 12, "seed": 1, "out": "from_cfg.csv"}))
    assert run("simulate", "--config", cfg, "--n-bits", "7").exit_code == 0
    trace, side = load_trace(tmp_path / "from_cfg.csv")
    assert side["link"]["t_s"] == 2.0 and len(trace.meta["bits"]) == 7


def test_train_then_decode(run, tmp_path):
    assert run("simulate", "--preset", "noiseless", "--n-bits", "30", "--lead-in", "5",
               "--lead-out", "8").exit_code == 0
    res = run("train", "--decoder", "nst", "--preset", "noiseless", "--traces", "4", "--out", "m.json")
    assert res.exit_code == 0, res.output
    assert json.loads((tmp_path / "m.json").read_text())["format"] == "molink-decoder"
    res = run("decode", tmp_path / "trace.csv", "--model", tmp_path / "m.json")
    assert res.exit_code == 0, res.output
    out = json.loads((tmp_path / "decoded.json").read_text())
    assert out["payload_bit_errors"] == 0 and len(out["bits"]) == 30


def test_sync_with_saved_classifier(run, tmp_path):
    assert run("simulate", "--t-s", "2", "--n-bits", "10").exit_code == 0
    res = run("sync", tmp_path / "trace.csv", "--per-class", "40", "--save-classifier", "clf.json")
    assert res.exit_code == 0, res.output
    first = json.loads((tmp_path / "sync.json").read_text())
    assert first["t_s"] in (0.5, 1.0, 2.0, 3.0)
    assert sum(first["probabilities"].values()) == pytest.approx(1.0)
    res = run("sync", tmp_path / "trace.csv", "--classifier", tmp_path / "clf.json", "--out", "again.json")
    assert res.exit_code == 0
    assert json.loads((tmp_path / "again.json").read_text()) == first


def test_bench_writes_table(run, tmp_path):
    res = run("bench", "--t-s", "1", "--decoder", "nst", "--trials", "1", "--bits-per-trial", "505",
              "--train-trials", "3", "--out", "tables/b.csv")
    assert res.exit_code == 0, res.output
    table = load_csv(tmp_path / "tables" / "b.csv")
    assert len(table) == 1 and table.rows[0].decoder == "nst"
    meta = json.loads((tmp_path / "tables" / "b.csv.json").read_text())
    assert meta["config"]["bits_per_trial"] == 505


def test_send_text_report(run, tmp_path):
    res = run("send-text", "--message", "HTECH", "--decoder", "nst", "--preset", "noiseless",
              "--train-traces", "3", "--t-s", "1")
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["decoded_text"] == "HTECH" and rep["bit_errors"] == 0 and rep["payload_bits"] == 25


@pytest.mark.parametrize("args", [
    ["simulate", "--t-s", "0.7"],
    ["simulate", "--bits", "10x1"],
    ["simulate", "--preset", "nope"],
    ["bench", "--t-s", "1", "--trials", "1"],
    ["send-text", "--message", "HI5", "--decoder", "nst", "--preset", "noiseless", "--train-traces", "2"],
    ["send-text"],
    ["decode", "missing.csv"],
    ["frobnicate"],
])
def test_errors_exit_nonzero(run, args):
    assert run(*args).exit_code != 0
