"""Daily stock correlation graph: Spearman similarity, industry decay, adjacency."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .panel import CLOSE, IndustryMap, Window


@dataclass(frozen=True)
class SimilarityMatrix:
    q: np.ndarray
    t: int = -1
    constant: tuple[int, ...] = field(default=())  # stocks with zero rank variance


@dataclass(frozen=True)
class DecayMatrix:
    d: np.ndarray


def _rank_rows(series: np.ndarray) -> np.ndarray:
    return rankdata(series, method="average", axis=1)


def spearman_from_series(series: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    """Spearman matrix of the rows of ``series`` ([N, L]) plus constant-row indices."""
    series = np.asarray(series, dtype=np.float64)
    n, length = series.shape
    if length < 3:
        raise ValueError(f"need at least 3 observations per series, got {length}")
    ranks = _rank_rows(series)
    # a row without ties is a permutation of 1..L
    tie_free = np.all(np.sort(ranks, axis=1) == np.arange(1, length + 1), axis=1)

    sq = np.sum(ranks * ranks, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * ranks @ ranks.T
    q = 1.0 - 6.0 * d2 / (length * (length * length - 1))

    centered = ranks - ranks.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(centered * centered, axis=1))
    constant = norms == 0.0
    pair_exact = tie_free[:, None] & tie_free[None, :]
    if not np.all(pair_exact):
        safe = np.where(constant, 1.0, norms)
        pearson = (centered @ centered.T) / (safe[:, None] * safe[None, :])
        q = np.where(pair_exact, q, pearson)
    q[constant, :] = 0.0
    q[:, constant] = 0.0
    q = np.clip(0.5 * (q + q.T), -1.0, 1.0)
    np.fill_diagonal(q, 1.0)
    return q, tuple(int(i) for i in np.flatnonzero(constant))


def spearman_matrix(window: Window, channel: int = CLOSE) -> SimilarityMatrix:
    """Within-window rank correlation of the close channel between every stock pair.

    Tie-free pairs use the closed form ``1 - 6 sum d^2 / (L (L^2 - 1))``; pairs
    with ties use the Pearson correlation of average ranks. A constant series
    correlates 0 with everything except itself.
    """
    q, constant = spearman_from_series(window.features[:, :, channel])
    return SimilarityMatrix(q, window.t, constant)


def decay_matrix(industry: IndustryMap, tickers: Sequence[str]) -> DecayMatrix:
    industry.check_covers(tickers)
    prim = np.array([industry.assignments[t][0] for t in tickers], dtype=object)
    sec = np.array([industry.assignments[t][1] for t in tickers], dtype=object)
    same_sec = sec[:, None] == sec[None, :]
    same_prim = prim[:, None] == prim[None, :]
    d = np.where(same_sec, 1.0, np.where(same_prim, industry.delta1, industry.delta2))
    return DecayMatrix(d.astype(np.float64))


def combine_adjacency(q: SimilarityMatrix | np.ndarray, d: DecayMatrix | np.ndarray) -> np.ndarray:
    """Elementwise product of similarity and decay."""
    qa = q.q if isinstance(q, SimilarityMatrix) else np.asarray(q)
    da = d.d if isinstance(d, DecayMatrix) else np.asarray(d)
    if qa.shape != da.shape:
        raise ValueError(f"shape mismatch {qa.shape} vs {da.shape}")
    return qa * da


def dump_graph_csv(path: str | Path, adjacency: np.ndarray, mask: np.ndarray | None = None,
                   tickers: Sequence[str] | None = None) -> None:
    """Write ``i,j,weight,retained`` rows for one day's graph."""
    n = adjacency.shape[0]
    if mask is None:
        mask = np.ones_like(adjacency, dtype=bool)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "weight", "retained"])
        for i in range(n):
            for j in range(n):
                a = tickers[i] if tickers else i
                b = tickers[j] if tickers else j
                w.writerow([a, b, repr(float(adjacency[i, j])), int(bool(mask[i, j]))])
