"""Training losses: regression + pairwise hinge ranking, information-bottleneck surrogate."""

from __future__ import annotations

from dataclasses import dataclass

import torch

GIB_EPS = 1e-8


class TrainingDivergence(FloatingPointError):
    """A loss component became NaN or infinite."""


@dataclass(frozen=True)
class LossWeights:
    eta: float = 3.0
    lam: float = 1.0

    def __post_init__(self) -> None:
        if self.eta < 0 or self.lam < 0:
            raise ValueError("loss weights must be non-negative")


def _days(x: torch.Tensor, extra_dims: int) -> torch.Tensor:
    x = torch.as_tensor(x, dtype=torch.float64) if not torch.is_tensor(x) else x
    return x.unsqueeze(0) if x.dim() == extra_dims else x


def hinge_term(y: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
    """Per-day sum over ordered pairs of ``max(0, -(y_i - y_j)(r_i - r_j))``."""
    dy = y.unsqueeze(-1) - y.unsqueeze(-2)
    dr = r.unsqueeze(-1) - r.unsqueeze(-2)
    return torch.relu(-dy * dr).sum(dim=(-2, -1))


def loss_rp(y: torch.Tensor, r: torch.Tensor, eta: float = 3.0) -> torch.Tensor:
    """Squared error plus ``eta`` times the pairwise hinge, averaged over days.

    ``y``, ``r``: ``[N]`` for one day or ``[D, N]`` for a batch of days.
    """
    y, r = _days(y, 1), _days(r, 1)
    mse = ((y - r) ** 2).sum(dim=-1)
    return (mse + eta * hinge_term(y, r)).mean()


def loss_gib(z: torch.Tensor, s: torch.Tensor, eps: float = GIB_EPS) -> torch.Tensor:
    """Sum over stocks of squared mean gap over pooled (population) variance, averaged over days.

    ``z``, ``s``: ``[N, L, F]`` or ``[D, N, L, F]``; statistics are over all
    ``L * F`` entries of each stock.
    """
    z, s = _days(z, 3), _days(s, 3)
    if z.shape != s.shape:
        raise ValueError(f"shape mismatch {tuple(z.shape)} vs {tuple(s.shape)}")
    zf = z.flatten(start_dim=-2)
    sf = s.flatten(start_dim=-2)
    gap = (zf.mean(dim=-1) - sf.mean(dim=-1)) ** 2
    denom = torch.clamp(zf.var(dim=-1, unbiased=False) + sf.var(dim=-1, unbiased=False), min=eps)
    return (gap / denom).sum(dim=-1).mean()


def loss_total(rp: torch.Tensor, gib: torch.Tensor, weights: LossWeights | float = 1.0) -> torch.Tensor:
    lam = weights.lam if isinstance(weights, LossWeights) else float(weights)
    for name, value in (("rp", rp), ("gib", gib)):
        if not torch.isfinite(torch.as_tensor(value)).all():
            raise TrainingDivergence(f"loss component {name} is not finite: {value}")
    return rp + lam * gib
