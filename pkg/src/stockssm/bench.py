"""Lookback scaling benchmark: selective scan versus naive quadratic attention.

Both kernels run as float64 numpy inference code so ``tracemalloc`` sees every
allocation.
"""

from __future__ import annotations

import csv
import statistics
import time
import tracemalloc
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ConfigError
from .mlmamba import SelectiveSSM


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class ScanWeights:
    A: np.ndarray  # [D, S], negative
    dt: np.ndarray  # [D, D]
    B: np.ndarray  # [S, D]
    C: np.ndarray  # [S, D]
    gate: np.ndarray | None  # [D, D]
    out: np.ndarray  # [D, D]

    @classmethod
    def from_module(cls, ssm: SelectiveSSM) -> "ScanWeights":
        def w(lin):
            return lin.weight.detach().double().numpy().copy()
        return cls(ssm.A.detach().double().numpy().copy(), w(ssm.dt_proj), w(ssm.B_proj),
                   w(ssm.C_proj), w(ssm.gate) if ssm.gated else None, w(ssm.out_proj))

    @classmethod
    def random(cls, d_model: int, d_state: int, seed: int = 0) -> "ScanWeights":
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(d_model)

        def u(*shape):
            return rng.uniform(-bound, bound, size=shape)
        A = -np.tile(np.arange(1, d_state + 1, dtype=np.float64), (d_model, 1))
        return cls(A, u(d_model, d_model), u(d_state, d_model), u(d_state, d_model),
                   u(d_model, d_model), u(d_model, d_model))


def scan_numpy(x: np.ndarray, w: ScanWeights) -> np.ndarray:
    """Selective SSM forward pass on ``[B, L, D]``; state memory is ``O(B D S)``."""
    delta = _softplus(x @ w.dt.T)
    Bm = x @ w.B.T
    Cm = x @ w.C.T
    h = np.zeros(x.shape[:1] + w.A.shape)
    y = np.empty_like(x)
    for t in range(x.shape[1]):
        d_t = delta[:, t, :, None]
        h = np.exp(d_t * w.A) * h + (d_t * x[:, t, :, None]) * Bm[:, t, None, :]
        y[:, t] = np.einsum("bds,bs->bd", h, Cm[:, t])
    if w.gate is not None:
        y = y * _silu(x @ w.gate.T)
    return y @ w.out.T


def naive_attention(x: np.ndarray, wq: np.ndarray, wk: np.ndarray, wv: np.ndarray) -> np.ndarray:
    """Single-head softmax attention materializing the full ``[B, L, L]`` score matrix."""
    q, k, v = x @ wq, x @ wk, x @ wv
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(x.shape[-1])
    scores -= scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    return weights @ v


def _measure(fn, reps: int) -> tuple[float, int, np.ndarray]:
    out = fn()  # warm-up
    times = []
    for _ in range(reps):
        start = time.perf_counter()
        out = fn()
        times.append((time.perf_counter() - start) * 1e3)
    tracemalloc.start()
    fn()
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    return statistics.median(times), peak, out


@dataclass(frozen=True)
class BenchRow:
    lookback: int
    scan_ms: float
    attention_ms: float
    scan_peak_bytes: int
    attention_peak_bytes: int
    finite: bool


def run_bench(lookbacks: Sequence[int] = (20, 40, 80, 160), batch: int = 64, d_model: int = 64,
              d_state: int = 16, reps: int = 7, seed: int = 0) -> list[BenchRow]:
    if len(lookbacks) < 2:
        raise ConfigError("bench needs at least two lookback values")
    rng = np.random.default_rng(seed)
    w = ScanWeights.random(d_model, d_state, seed)
    wq, wk, wv = (rng.uniform(-1, 1, (d_model, d_model)) / np.sqrt(d_model) for _ in range(3))
    rows = []
    for length in lookbacks:
        x = rng.standard_normal((batch, length, d_model))
        s_ms, s_peak, s_out = _measure(lambda: scan_numpy(x, w), reps)
        a_ms, a_peak, a_out = _measure(lambda: naive_attention(x, wq, wk, wv), reps)
        rows.append(BenchRow(length, s_ms, a_ms, s_peak, a_peak,
                             bool(np.all(np.isfinite(s_out)) and np.all(np.isfinite(a_out)))))
    return rows


def write_bench_csv(path: str | Path, rows: Sequence[BenchRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "scan_ms", "attention_ms", "scan_peak_bytes", "attention_peak_bytes"])
        for r in rows:
            w.writerow([r.lookback, f"{r.scan_ms:.6f}", f"{r.attention_ms:.6f}",
                        r.scan_peak_bytes, r.attention_peak_bytes])
