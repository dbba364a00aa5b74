"""Command-line entry point: gen, train, backtest, report, bench, sweep."""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import backtest as bt
from .bench import run_bench, write_bench_csv
from .config import ConfigError, RegimeConfig, TrainConfig, read_config_file, write_config
from .dyngraph import dump_graph_csv, spearman_from_series
from .gatagg import build_embedding
from .panel import CLOSE, OPEN, PanelError, gen_synthetic, load_panel, write_panel
from .trainer import Dataset, load_checkpoint, prepare, save_checkpoint, train

log = logging.getLogger("stockssm")


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _train_config(args) -> TrainConfig:
    cfg = read_config_file(args.config) if getattr(args, "config", None) else TrainConfig()
    overrides = {}
    for name in ("seed", "epochs", "learning_rate", "lookback"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides) if overrides else cfg


def _load(args, cfg: TrainConfig):
    return load_panel(args.panel, args.industry, cfg.missing, cfg.delta1, cfg.delta2)


def _restore(args) -> tuple[torch.nn.Module, TrainConfig, Dataset]:
    model, cfg, scaler, _ = load_checkpoint(args.checkpoint)
    panel, industry = _load(args, cfg)
    return model, cfg, prepare(panel, industry, cfg, scaler)


def _split_indices(data: Dataset, split: str) -> list[int]:
    if split == "all":
        return list(range(len(data.days)))
    idx = getattr(data, split)
    if not idx:
        raise ConfigError(f"the {split} split is empty")
    return idx


def predict(model, data: Dataset, idx: Sequence[int]):
    batch = data.days.subset(idx)
    with torch.no_grad():
        y, aux = model(batch.features, batch.market, batch.base_adj)
    return batch, y.numpy(), aux


def execution_returns(data: Dataset, idx: Sequence[int], mode: str) -> tuple[list[int], np.ndarray]:
    """Returns earned by positions formed on each day in ``idx``.

    ``close``: close(t) -> close(t+1), the label return. ``open``: open(t+1) ->
    open(t+2); days without an open two sessions ahead are dropped.
    """
    if mode == "close":
        return list(idx), data.days.returns[list(idx)].numpy()
    if mode != "open":
        raise ConfigError(f"unknown execution mode {mode!r}")
    opens = data.panel.values[:, :, OPEN]
    keep = [i for i in idx if data.days.t[i] + 2 < data.panel.n_days]
    rets = np.stack([opens[:, data.days.t[i] + 2] / opens[:, data.days.t[i] + 1] - 1 for i in keep])
    return keep, rets


def cmd_gen(args) -> None:
    regimes = RegimeConfig(signal=args.signal) if args.signal is not None else RegimeConfig()
    panel, industry = gen_synthetic(args.seed, args.stocks, args.days, regimes)
    out = _outdir(args.out)
    write_panel(panel, industry, out / "panel.csv", out / "industry.csv")
    print(f"wrote {out / 'panel.csv'} ({panel.n_stocks} stocks x {panel.n_days} days)")


def cmd_train(args) -> None:
    cfg = _train_config(args)
    panel, industry = _load(args, cfg)
    out = _outdir(args.out)
    write_config(cfg, out / "config.json", command="train", panel=str(args.panel),
                 industry=str(args.industry))
    result = train(panel, industry, cfg)
    save_checkpoint(out / "checkpoint.npz", result.model, cfg, result.data.scaler,
                    best_epoch=result.best_epoch)
    keys = sorted({k for row in result.log for k in row}, key=lambda k: (k != "epoch", k))
    with open(out / "training_log.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(result.log)
    last = result.log[-1]
    print(f"trained {len(result.log)} epochs (best {result.best_epoch}); "
          f"train loss {last['train_loss']:.6g}; checkpoint {out / 'checkpoint.npz'}")


def cmd_backtest(args) -> None:
    model, cfg, data = _restore(args)
    idx = _split_indices(data, args.split)
    _, scores, _ = predict(model, data, idx)
    keep, rets = execution_returns(data, idx, args.execution)
    scores = scores[[idx.index(i) for i in keep]]
    k = args.k if args.k is not None else cfg.top_k
    report = bt.simulate(scores, rets, k, data.panel.tickers)
    dates = [data.panel.calendar[data.days.t[i]] for i in keep]
    out = _outdir(args.out)
    bt.write_metrics_json(out / "metrics.json", report.metrics, days=len(keep), k=k,
                          split=args.split, execution=args.execution)
    bt.write_equity_csv(out / "equity.csv", report, dates)
    bt.write_holdings_csv(out / "holdings.csv", report, dates)
    if args.svg:
        bt.write_svg(out / "equity.svg", report.equity)
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump({"command": "backtest", "checkpoint": str(args.checkpoint), "k": k,
                   "split": args.split, "execution": args.execution, "train": cfg.to_dict()},
                  fh, indent=2, sort_keys=True)
    print(json.dumps({m: (bt.UNDEFINED if v is None else round(v, 6))
                      for m, v in report.metrics.items()}))


def report_kappa(args) -> None:
    model, _, data = _restore(args)
    idx = _split_indices(data, args.split)
    batch, _, aux = predict(model, data, idx)
    close = data.panel.values[:, :, CLOSE]
    masks = aux["masks"].numpy()
    n = data.panel.n_stocks
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "index_level", "kappa", "retained_edges"])
        for d, t in enumerate(batch.t):
            retained = int(masks[d].sum() - n)
            w.writerow([data.panel.calendar[t], repr(float(close[:, t].mean())),
                        repr(float(aux["kappa"][d])), retained])


def _day_index(data: Dataset, date: str | None) -> int:
    if date is None:
        return len(data.days) - 1
    days = [data.panel.calendar[t] for t in data.days.t]
    if date not in days:
        raise ConfigError(f"no window ends on {date}")
    return days.index(date)


def cosine_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    unit = vectors / np.where(norms > 0, norms, 1.0)
    return unit @ unit.T


def report_embed_sim(args) -> None:
    model, _, data = _restore(args)
    d = _day_index(data, args.date)
    batch = data.days.subset([d])
    with torch.no_grad():
        _, aux = model(batch.features, batch.market, batch.base_adj)
        p = build_embedding(aux["s"], aux["z"])[0].numpy()
    sim = cosine_matrix(p.reshape(p.shape[0], -1))
    tickers = data.panel.tickers
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ticker", *tickers])
        for tk, row in zip(tickers, sim):
            w.writerow([tk, *(repr(float(x)) for x in row)])


def report_corr(args) -> None:
    cfg = read_config_file(args.config) if args.config else TrainConfig()
    panel, _ = _load(args, cfg)
    tickers = args.tickers.split(",") if args.tickers else list(panel.tickers[:3])
    unknown = [t for t in tickers if t not in panel.tickers]
    if unknown:
        raise ConfigError(f"unknown tickers: {unknown}")
    rows = [panel.tickers.index(t) for t in tickers]
    window = args.window or cfg.lookback
    close = panel.values[rows, :, CLOSE]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "ticker_a", "ticker_b", "spearman"])
        for t in range(window - 1, panel.n_days):
            q, _ = spearman_from_series(close[:, t - window + 1: t + 1])
            for a, b in itertools.combinations(range(len(rows)), 2):
                w.writerow([panel.calendar[t], tickers[a], tickers[b], repr(float(q[a, b]))])


def report_graph(args) -> None:
    model, _, data = _restore(args)
    d = _day_index(data, args.date)
    batch = data.days.subset([d])
    with torch.no_grad():
        _, aux = model(batch.features, batch.market, batch.base_adj)
    dump_graph_csv(args.out, batch.base_adj[0], aux["masks"][0].numpy(), data.panel.tickers)


def cmd_bench(args) -> None:
    lookbacks = [int(x) for x in args.lookbacks.split(",")]
    torch.set_num_threads(1)
    rows = run_bench(lookbacks, args.batch, args.d_model, args.d_state, args.reps, args.seed)
    write_bench_csv(args.out, rows)
    first, last = rows[0], rows[-1]
    print(f"scan t({last.lookback})/t({first.lookback}) = {last.scan_ms / first.scan_ms:.2f}; "
          f"attention = {last.attention_ms / first.attention_ms:.2f}")


SWEEP_KEYS = {"lookback": int, "gnn_layers": int, "eta": float, "levels": int}


def parse_grid(spec: str) -> dict[str, list]:
    """``"lookback=10,20;eta=0,3"`` -> ``{"lookback": [10, 20], "eta": [0.0, 3.0]}``."""
    grid = {}
    for part in filter(None, (p.strip() for p in spec.split(";"))):
        key, _, values = part.partition("=")
        key = key.strip()
        if key not in SWEEP_KEYS:
            raise ConfigError(f"sweep key must be one of {sorted(SWEEP_KEYS)}, got {key!r}")
        grid[key] = [SWEEP_KEYS[key](v) for v in values.split(",") if v.strip()]
        if not grid[key]:
            raise ConfigError(f"no values for {key}")
    if not grid:
        raise ConfigError("empty sweep grid")
    return grid


def cmd_sweep(args) -> None:
    base = _train_config(args)
    panel, industry = _load(args, base)
    grid = parse_grid(args.grid)
    out = _outdir(args.out)
    write_config(base, out / "config.json", command="sweep", grid=grid)
    names = list(grid)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, "epochs_run", "final_val_loss", "final_val_ic"])
        for combo in itertools.product(*(grid[n] for n in names)):
            cfg = replace(base, **dict(zip(names, combo)))
            result = train(panel, industry, cfg)
            last = result.log[-1]
            w.writerow([*combo, len(result.log), repr(last.get("val_loss", float("nan"))),
                        repr(last.get("val_ic", float("nan")))])
            fh.flush()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stockssm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p, checkpoint=False):
        p.add_argument("--panel", required=True, help="panel CSV (date,ticker,close,open,high,low,turnover,volume)")
        p.add_argument("--industry", required=True, help="industry CSV (ticker,primary,secondary)")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("gen", help="write a synthetic panel and industry map")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--stocks", type=int, default=20)
    p.add_argument("--days", type=int, default=120)
    p.add_argument("--signal", type=float, default=None, help="order-flow signal strength")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    data_args(p)
    p.add_argument("--config", help="key = value file overriding training defaults")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--lookback", type=int)
    p.add_argument("--out", default="run")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("backtest", help="top-k daily backtest of a checkpoint")
    data_args(p, checkpoint=True)
    p.add_argument("--k", type=int)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--execution", choices=("close", "open"), default="close")
    p.add_argument("--svg", action="store_true", help="also write equity.svg")
    p.add_argument("--out", default="backtest")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("report", help="analysis reports")
    rsub = p.add_subparsers(dest="report", required=True)
    r = rsub.add_parser("kappa", help="per-day sparsity level against the index level")
    data_args(r, checkpoint=True)
    r.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    r.add_argument("--out", default="kappa.csv")
    r.set_defaults(func=report_kappa)
    r = rsub.add_parser("embed-sim", help="cosine similarity of stock embeddings on one day")
    data_args(r, checkpoint=True)
    r.add_argument("--date", help="window end date (default: last window)")
    r.add_argument("--out", default="embed_sim.csv")
    r.set_defaults(func=report_embed_sim)
    r = rsub.add_parser("corr", help="rolling pairwise Spearman of close prices")
    data_args(r)
    r.add_argument("--config")
    r.add_argument("--tickers", help="comma-separated tickers (default: first three)")
    r.add_argument("--window", type=int)
    r.add_argument("--out", default="corr.csv")
    r.set_defaults(func=report_corr)
    r = rsub.add_parser("graph", help="dump one day's adjacency and retained edges")
    data_args(r, checkpoint=True)
    r.add_argument("--date")
    r.add_argument("--out", default="graph.csv")
    r.set_defaults(func=report_graph)

    p = sub.add_parser("bench", help="scan vs attention lookback scaling")
    p.add_argument("--lookbacks", default="20,40,80,160")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--d-model", dest="d_model", type=int, default=64)
    p.add_argument("--d-state", dest="d_state", type=int, default=16)
    p.add_argument("--reps", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="grid of training runs, final validation loss per cell")
    data_args(p)
    p.add_argument("--config")
    p.add_argument("--grid", required=True, help='e.g. "lookback=10,20;gnn_layers=1,2;eta=0,3;levels=1,2"')
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", default="sweep")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except (ConfigError, PanelError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
