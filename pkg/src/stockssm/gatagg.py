"""Multi-head graph attention over each day's retained edges, and embedding assembly."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

NEGATIVE_SLOPE = 0.2


def _uniform_(w: torch.Tensor, fan_in: int) -> None:
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        w.uniform_(-bound, bound)


class GatLayer(nn.Module):
    """One attention layer: shared ``W``, per-head attention vectors, output projection.

    Coefficients are computed once per day from time-pooled ``W h`` and reused
    at every step of the window.
    """

    def __init__(self, n_features: int, heads: int = 4) -> None:
        super().__init__()
        self.n_features = n_features
        self.heads = heads
        self.W = nn.Linear(n_features, n_features, bias=False)
        self.att = nn.Parameter(torch.empty(heads, 2 * n_features))
        self.out_proj = nn.Linear(heads * n_features, n_features, bias=False)
        _uniform_(self.att, 2 * n_features)

    def coefficients(self, h: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """``h``: ``[B, N, L, F]``, ``mask``: ``[B, N, N]`` bool -> alpha ``[B, H, N, N]``."""
        pooled = self.W(h).mean(dim=-2)  # [B, N, F]
        f = self.n_features
        src = torch.einsum("bnf,hf->bhn", pooled, self.att[:, :f])
        dst = torch.einsum("bnf,hf->bhn", pooled, self.att[:, f:])
        logits = F.leaky_relu(src.unsqueeze(-1) + dst.unsqueeze(-2), NEGATIVE_SLOPE)
        logits = logits.masked_fill(~mask.unsqueeze(1), float("-inf"))
        return torch.softmax(logits, dim=-1)

    def forward(self, h: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        alpha = self.coefficients(h, mask)
        wh = self.W(h)
        per_head = torch.einsum("bhij,bjlf->bilhf", alpha, wh)
        b, n, length = per_head.shape[:3]
        return F.gelu(self.out_proj(per_head.reshape(b, n, length, self.heads * self.n_features)))


class GraphAggregator(nn.Module):
    def __init__(self, n_features: int, heads: int = 4, layers: int = 2) -> None:
        super().__init__()
        self.layers = nn.ModuleList(GatLayer(n_features, heads) for _ in range(layers))

    def forward(self, h: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            h = layer(h, mask)
        return h


def _batched(h: torch.Tensor, mask) -> tuple[torch.Tensor, torch.Tensor, bool]:
    mask = torch.as_tensor(mask, dtype=torch.bool)
    if h.dim() == 3:
        return h.unsqueeze(0), mask.unsqueeze(0), True
    return h, mask, False


def attention_coefficients(h: torch.Tensor, mask, layer: GatLayer, head: int) -> torch.Tensor:
    """Attention matrix ``[N, N]`` of one head for a single day (``h``: ``[N, L, F]``)."""
    hb, mb, _ = _batched(h, mask)
    return layer.coefficients(hb, mb)[0, head]


def aggregate(h: torch.Tensor, mask, params: GraphAggregator | GatLayer) -> torch.Tensor:
    hb, mb, single = _batched(h, mask)
    z = params(hb, mb)
    return z[0] if single else z


def build_embedding(h_raw: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    """Concatenate raw features and neighbour aggregates on the last axis."""
    if h_raw.shape != z.shape:
        raise ValueError(f"shape mismatch {tuple(h_raw.shape)} vs {tuple(z.shape)}")
    return torch.cat([h_raw, z], dim=-1)
