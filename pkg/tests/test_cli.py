import csv
import json

import numpy as np
import pytest

from stockssm.backtest import METRIC_NAMES
from stockssm.cli import main, parse_grid
from stockssm.config import ConfigError

TINY = """# small model for tests
lookback = 8
epochs = 2
d_model = 8
d_out = 4
d_state = 4
heads = 2
gnn_layers = 1
batch_days = 8
top_k = 3
"""


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--seed", "7", "--stocks", "8", "--days", "60", "--out", str(root / "data")]) == 0
    (root / "tiny.cfg").write_text(TINY)
    data = ["--panel", str(root / "data/panel.csv"), "--industry", str(root / "data/industry.csv")]
    assert main(["train", *data, "--config", str(root / "tiny.cfg"), "--seed", "3",
                 "--out", str(root / "run")]) == 0
    return root, data


def test_gen_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["gen", "--seed", "7", "--stocks", "5", "--days", "40", "--out", str(tmp_path / d)]) == 0
    for name in ("panel.csv", "industry.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a/panel.csv").read_text().splitlines()[0]
    assert header == "date,ticker,close,open,high,low,turnover,volume"


def test_gen_rejects_one_stock(tmp_path, capsys):
    assert main(["gen", "--stocks", "1", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_train_artifacts(run):
    root, _ = run
    log = rows(root / "run/training_log.csv")
    assert len(log) == 2 and list(log[0]) == ["epoch", "train_ic", "train_loss", "val_ic", "val_loss"]
    cfg = json.loads((root / "run/config.json").read_text())
    assert cfg["train"]["seed"] == 3 and cfg["train"]["lookback"] == 8
    assert (root / "run/checkpoint.npz").exists()


@pytest.mark.parametrize("execution", ["close", "open"])
def test_backtest_schema(run, execution):
    root, data = run
    out = root / f"bt_{execution}"
    assert main(["backtest", *data, "--checkpoint", str(root / "run/checkpoint.npz"),
                 "--execution", execution, "--svg", "--out", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    for name in METRIC_NAMES:
        v = metrics[name]
        assert v == "undefined" or np.isfinite(v)
    eq = rows(out / "equity.csv")
    assert list(eq[0]) == ["date", "portfolio_return", "benchmark_return", "equity"]
    assert len(eq) == metrics["days"]
    hold = rows(out / "holdings.csv")
    assert list(hold[0]) == ["date", "rank", "ticker"] and len(hold) == 3 * len(eq)
    assert (out / "equity.svg").read_text().startswith("<svg")
    assert json.loads((out / "config.json").read_text())["k"] == 3


def test_report_kappa_one_row_per_test_day(run):
    root, data = run
    out = root / "kappa.csv"
    assert main(["report", "kappa", *data, "--checkpoint", str(root / "run/checkpoint.npz"),
                 "--out", str(out)]) == 0
    test_days = len(rows(root / "bt_close/equity.csv")) if (root / "bt_close").exists() else None
    got = rows(out)
    assert list(got[0]) == ["date", "index_level", "kappa", "retained_edges"]
    n_windows = 60 - 8
    n_train, n_val = int(n_windows * 4 / 6), int(n_windows / 6)
    assert len(got) == n_windows - n_train - n_val
    assert test_days in (None, len(got))
    for r in got:
        k = float(r["kappa"])
        assert 0 < k < 1 and int(r["retained_edges"]) == int(np.ceil(k * 8 * 7))


def test_report_embed_sim_diagonal(run):
    root, data = run
    out = root / "sim.csv"
    assert main(["report", "embed-sim", *data, "--checkpoint", str(root / "run/checkpoint.npz"),
                 "--out", str(out)]) == 0
    got = rows(out)
    assert len(got) == 8
    for r in got:
        assert float(r[r["ticker"]]) == pytest.approx(1.0, abs=1e-12)


def test_report_corr_and_graph(run):
    root, data = run
    assert main(["report", "corr", *data, "--tickers", "S00,S01", "--window", "10",
                 "--out", str(root / "corr.csv")]) == 0
    got = rows(root / "corr.csv")
    assert list(got[0]) == ["date", "ticker_a", "ticker_b", "spearman"] and len(got) == 60 - 9
    assert all(-1 <= float(r["spearman"]) <= 1 for r in got)
    assert main(["report", "graph", *data, "--checkpoint", str(root / "run/checkpoint.npz"),
                 "--out", str(root / "graph.csv")]) == 0
    g = rows(root / "graph.csv")
    assert len(g) == 64 and list(g[0]) == ["i", "j", "weight", "retained"]


def test_missing_checkpoint_is_an_error(run, capsys):
    root, data = run
    assert main(["backtest", *data, "--checkpoint", str(root / "nope.npz"), "--out", str(root / "x")]) == 2
    assert "checkpoint not found" in capsys.readouterr().err


def test_unknown_config_key(run, tmp_path):
    _, data = run
    (tmp_path / "bad.cfg").write_text("lookbak = 5\n")
    assert main(["train", *data, "--config", str(tmp_path / "bad.cfg"), "--out", str(tmp_path)]) == 2


def test_bench_csv(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--lookbacks", "8,16", "--batch", "2", "--d-model", "4", "--d-state", "2",
                 "--reps", "1", "--out", str(out)]) == 0
    got = rows(out)
    assert list(got[0]) == ["L", "scan_ms", "attention_ms", "scan_peak_bytes", "attention_peak_bytes"]
    assert [int(r["L"]) for r in got] == [8, 16]
    assert main(["bench", "--lookbacks", "8", "--out", str(out)]) == 2


def test_sweep(run, tmp_path):
    root, data = run
    assert main(["sweep", *data, "--config", str(root / "tiny.cfg"), "--epochs", "1",
                 "--grid", "eta=0,3;levels=1", "--out", str(tmp_path)]) == 0
    got = rows(tmp_path / "sweep.csv")
    assert len(got) == 2 and list(got[0])[:2] == ["eta", "levels"]
    assert json.loads((tmp_path / "config.json").read_text())["grid"] == {"eta": [0.0, 3.0], "levels": [1]}


def test_parse_grid():
    assert parse_grid("lookback=10,20; eta=0") == {"lookback": [10, 20], "eta": [0.0]}
    for bad in ("", "depth=3", "eta="):
        with pytest.raises(ConfigError):
            parse_grid(bad)
