"""Mean pairwise close-price Spearman per regime segment of a synthetic panel."""

import argparse

import numpy as np

from stockssm.config import RegimeConfig
from stockssm.dyngraph import spearman_from_series
from stockssm.panel import gen_synthetic


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--stocks", type=int, default=20)
    ap.add_argument("--days", type=int, default=120)
    ap.add_argument("--lookback", type=int, default=20)
    args = ap.parse_args()

    regimes = RegimeConfig()
    panel, _ = gen_synthetic(args.seed, args.stocks, args.days, regimes)
    n = panel.n_stocks
    for start, end, kind in regimes.resolved_segments(args.days):
        means = []
        for t in range(start + args.lookback - 1, end):
            q, _ = spearman_from_series(panel.close[:, t - args.lookback + 1: t + 1])
            means.append((q.sum() - n) / (n * (n - 1)))
        if means:
            print(f"{kind:8s} days {start:4d}-{end:4d}: mean pairwise Spearman {np.mean(means):+.3f}")


if __name__ == "__main__":
    main()
