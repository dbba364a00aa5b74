"""Market-aware edge retention: multi-scale conv sparsity level and top-K pruning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


class Inception(nn.Module):
    """Parallel same-padded 2D convs over the ``[L, F]`` plane, pooled to a scalar logit."""

    def __init__(self, kernel_sizes: tuple[int, ...] = (1, 3, 5), channels: int = 4) -> None:
        super().__init__()
        self.kernel_sizes = kernel_sizes
        self.branches = nn.ModuleList(
            nn.Conv2d(1, channels, k, padding=k // 2) for k in kernel_sizes)
        self.proj = nn.Linear(channels * len(kernel_sizes), 1)

    def forward(self, m: torch.Tensor) -> torch.Tensor:
        """``m``: ``[B, 1, L, F]`` (or ``[1, L, F]``); returns logits ``[B]``."""
        if m.dim() == 3:
            m = m.unsqueeze(0)
        length = m.shape[-2]
        if length < max(self.kernel_sizes):
            raise ValueError(f"lookback {length} shorter than the largest kernel")
        pooled = [branch(m).mean(dim=(-2, -1)) for branch in self.branches]
        return self.proj(torch.cat(pooled, dim=-1)).squeeze(-1)


class Sparsifier(nn.Module):
    def __init__(self, tau: float = 1.0, channels: int = 4) -> None:
        super().__init__()
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.tau = tau
        self.inception = Inception(channels=channels)

    def forward(self, m: torch.Tensor) -> torch.Tensor:
        return self.tau * torch.sigmoid(self.inception(m))


def sparsity_level(m: torch.Tensor | np.ndarray, params: Sparsifier) -> torch.Tensor:
    """kappa = tau * sigmoid(Inception(M)) for one ``[1, L, F]`` index window."""
    if not torch.is_tensor(m):
        m = torch.as_tensor(np.asarray(m), dtype=torch.float64)
    return params(m).squeeze(0)


@dataclass(frozen=True)
class DailyGraph:
    adjacency: np.ndarray  # [N, N]
    mask: np.ndarray  # [N, N] bool, diagonal always True
    kappa: float
    t: int = -1

    @property
    def retained_edges(self) -> int:
        return int(self.mask.sum() - np.trace(self.mask))


def retained_count(kappa: float, n: int) -> int:
    total = n * (n - 1)
    return min(total, max(0, math.ceil(kappa * total)))


def topk_mask(a: np.ndarray, kappa: float) -> np.ndarray:
    """Keep the ceil(kappa * N(N-1)) largest off-diagonal entries plus the diagonal.

    Ties go to the lexicographically smaller ``(i, j)``.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    w = a[ii, jj]
    order = np.lexsort((jj, ii, -w))
    keep = order[: retained_count(kappa, n)]
    mask = np.eye(n, dtype=bool)
    mask[ii[keep], jj[keep]] = True
    return mask


def sparsify(a: np.ndarray, kappa: float, t: int = -1) -> DailyGraph:
    kappa = float(kappa)
    if not 0.0 < kappa <= 1.0:
        raise ValueError(f"kappa must lie in (0, 1], got {kappa}")
    return DailyGraph(np.asarray(a, dtype=np.float64), topk_mask(a, kappa), kappa, t)
