"""Multi-level selective state-space model and the scoring head."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


def discretize(delta: torch.Tensor, A: torch.Tensor, B: torch.Tensor,
               x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Zero-order hold for the transition, Euler rule for the input.

    ``delta``, ``x``: ``[..., L, D]``; ``A``: ``[D, S]``; ``B``: ``[..., L, S]``.
    Returns ``(exp(delta A), delta B x)`` shaped ``[..., L, D, S]``.
    """
    dA = torch.exp(delta.unsqueeze(-1) * A)
    dBx = (delta * x).unsqueeze(-1) * B.unsqueeze(-2)
    return dA, dBx


def scan(dA: torch.Tensor, dBx: torch.Tensor, C: torch.Tensor) -> torch.Tensor:
    """Left-to-right linear recurrence ``h_t = dA_t h_{t-1} + dBx_t``, ``y_t = C_t . h_t``.

    ``dA``, ``dBx``: ``[..., L, D, S]``; ``C``: ``[..., L, S]`` -> ``[..., L, D]``.
    """
    # unbind keeps the backward pass linear in L (slicing would not)
    h = torch.zeros_like(dBx[..., 0, :, :])
    states = []
    for a_t, b_t in zip(dA.unbind(dim=-3), dBx.unbind(dim=-3)):
        h = a_t * h + b_t
        states.append(h)
    return (torch.stack(states, dim=-3) * C.unsqueeze(-2)).sum(dim=-1)


class SelectiveSSM(nn.Module):
    """Input-dependent diagonal SSM; every projection is bias-free."""

    def __init__(self, d_model: int, d_state: int = 16, gated: bool = True) -> None:
        super().__init__()
        self.d_model = d_model
        self.d_state = d_state
        self.gated = gated
        a = torch.arange(1, d_state + 1, dtype=torch.get_default_dtype()).repeat(d_model, 1)
        self.A_log = nn.Parameter(torch.log(a))
        self.dt_proj = nn.Linear(d_model, d_model, bias=False)
        self.B_proj = nn.Linear(d_model, d_state, bias=False)
        self.C_proj = nn.Linear(d_model, d_state, bias=False)
        self.gate = nn.Linear(d_model, d_model, bias=False)
        self.out_proj = nn.Linear(d_model, d_model, bias=False)

    @property
    def A(self) -> torch.Tensor:
        return -torch.exp(self.A_log)

    def delta(self, x: torch.Tensor) -> torch.Tensor:
        return F.softplus(self.dt_proj(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        dA, dBx = discretize(self.delta(x), self.A, self.B_proj(x), x)
        y = scan(dA, dBx, self.C_proj(x))
        if self.gated:
            y = y * F.silu(self.gate(x))
        return self.out_proj(y)


def selective_scan(x: torch.Tensor, params: SelectiveSSM) -> torch.Tensor:
    return params(x)


def pooled_length(length: int, stride: int) -> int:
    return math.ceil(length / stride)


def avg_pool_time(x: torch.Tensor, stride: int) -> torch.Tensor:
    """Mean-pool ``[..., L, D]`` along time in blocks of ``stride``; the last block may be short."""
    if stride == 1:
        return x
    length = x.shape[-2]
    out_len = pooled_length(length, stride)
    pad = out_len * stride - length
    if pad:
        x = torch.cat([x, x.new_zeros(*x.shape[:-2], pad, x.shape[-1])], dim=-2)
    sums = x.reshape(*x.shape[:-2], out_len, stride, x.shape[-1]).sum(dim=-2)
    counts = torch.full((out_len,), float(stride), dtype=x.dtype)
    counts[-1] = stride - pad
    return sums / counts.unsqueeze(-1)


class Level(nn.Module):
    def __init__(self, index: int, d_in: int, d_model: int, d_out: int, d_state: int) -> None:
        super().__init__()
        if index < 1:
            raise ValueError("level index starts at 1")
        self.index = index
        self.stride = 2 ** (index - 1)
        self.in_proj = nn.Linear(d_in, d_model, bias=False)
        self.norm = nn.RMSNorm(d_model, eps=1e-6)
        self.ssm = SelectiveSSM(d_model, d_state)
        self.relevel = nn.Linear(d_model, d_out, bias=False)

    def project(self, p: torch.Tensor) -> torch.Tensor:
        return avg_pool_time(self.in_proj(p), self.stride)

    def forward(self, p: torch.Tensor) -> torch.Tensor:
        """``p``: ``[..., L, d_in]`` -> re-levelled final state ``[..., d_out]``."""
        # normalized level input: the SSM's response is polynomial in input scale
        x = self.norm(self.project(p))
        return self.relevel((self.ssm(x) + x)[..., -1, :])


class MultiLevelSSM(nn.Module):
    def __init__(self, d_in: int, levels: int = 2, d_model: int = 64, d_out: int = 32,
                 d_state: int = 16) -> None:
        super().__init__()
        if levels < 1:
            raise ValueError("need at least one level")
        self.levels = nn.ModuleList(
            Level(i, d_in, d_model, d_out, d_state) for i in range(1, levels + 1))
        self.head = nn.Linear(levels * d_out, 1)

    def forward(self, p: torch.Tensor) -> torch.Tensor:
        """``p``: ``[..., N, L, 2F]`` -> scores ``[..., N]``."""
        fused = torch.cat([level(p) for level in self.levels], dim=-1)
        return self.head(fused).squeeze(-1)


def level_project(p: torch.Tensor, level: Level) -> torch.Tensor:
    return level.project(p)


def score(p: torch.Tensor, model: MultiLevelSSM) -> torch.Tensor:
    return model(p)
