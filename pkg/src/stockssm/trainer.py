"""Model assembly, day batching, Adam training with early stopping, gradient checking."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import torch
from torch import nn

from .config import ConfigError, TrainConfig
from .dyngraph import combine_adjacency, decay_matrix, spearman_from_series
from .gatagg import GraphAggregator, build_embedding
from .marketaware import Sparsifier, topk_mask
from .mlmamba import MultiLevelSSM
from .objective import TrainingDivergence, loss_gib, loss_rp, loss_total
from .panel import CLOSE, FEATURES, IndustryMap, Scaler, StockPanel, Window, \
    chronological_split, make_windows, market_index

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
N_FEATURES = len(FEATURES)


class StockRanker(nn.Module):
    """Sparsifier -> graph attention -> multi-level SSM, with all parameters in float64."""

    def __init__(self, cfg: TrainConfig, n_features: int = N_FEATURES) -> None:
        super().__init__()
        self.sparsifier = Sparsifier(cfg.tau, cfg.inception_channels)
        self.aggregator = GraphAggregator(n_features, cfg.heads, cfg.gnn_layers)
        self.mlm = MultiLevelSSM(2 * n_features, cfg.levels, cfg.d_model, cfg.d_out, cfg.d_state)
        self.double()

    def masks(self, base_adj: np.ndarray, kappa: torch.Tensor) -> torch.Tensor:
        ks = kappa.detach().cpu().numpy()
        return torch.as_tensor(np.stack([topk_mask(a, min(float(k), 1.0))
                                         for a, k in zip(base_adj, ks)]))

    def forward(self, features: torch.Tensor, market: torch.Tensor, base_adj: np.ndarray,
                masks: torch.Tensor | None = None) -> tuple[torch.Tensor, dict[str, Any]]:
        """``features``: ``[D, N, L, F]``, ``market``: ``[D, 1, L, F]``, ``base_adj``: ``[D, N, N]``.

        The top-K mask is a constant for differentiation; the sparsifier only
        receives gradient through an explicit kappa penalty.
        """
        kappa = self.sparsifier(market)
        if masks is None:
            masks = self.masks(base_adj, kappa)
        z = self.aggregator(features, masks)
        y = self.mlm(build_embedding(features, z))
        return y, {"z": z, "s": features, "kappa": kappa, "masks": masks}


def registry(model: nn.Module) -> dict[str, nn.Parameter]:
    return dict(model.named_parameters())


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


@dataclass
class DayData:
    """Stacked windows for a set of trading days."""

    t: np.ndarray  # [D] window end-day indices
    features: torch.Tensor  # [D, N, L, F]
    market: torch.Tensor  # [D, 1, L, F]
    returns: torch.Tensor  # [D, N]
    base_adj: np.ndarray  # [D, N, N]

    def __len__(self) -> int:
        return len(self.t)

    def subset(self, idx: Sequence[int]) -> "DayData":
        idx = np.asarray(idx, dtype=int)
        ti = torch.as_tensor(idx)
        return DayData(self.t[idx], self.features[ti], self.market[ti], self.returns[ti],
                       self.base_adj[idx])


def day_data(windows: Sequence[Window], decay: np.ndarray) -> DayData:
    feats = np.stack([w.features for w in windows])
    adj = np.stack([combine_adjacency(spearman_from_series(w.features[:, :, CLOSE])[0], decay)
                    for w in windows])
    return DayData(
        t=np.array([w.t for w in windows]),
        features=torch.as_tensor(feats, dtype=torch.float64),
        market=torch.as_tensor(np.stack([market_index(w) for w in windows]), dtype=torch.float64),
        returns=torch.as_tensor(np.stack([w.returns for w in windows]), dtype=torch.float64),
        base_adj=adj,
    )


@dataclass
class Dataset:
    panel: StockPanel
    industry: IndustryMap
    scaler: Scaler
    days: DayData
    train: list[int]
    val: list[int]
    test: list[int]


def prepare(panel: StockPanel, industry: IndustryMap, cfg: TrainConfig,
            scaler: Scaler | None = None) -> Dataset:
    """Window the panel, fit the scaler on the training range, split chronologically."""
    n_win = panel.n_days - cfg.lookback
    if n_win < 1:
        make_windows(panel, cfg.lookback)  # raises the insufficient-history error
    split = chronological_split(n_win, cfg.train_frac, cfg.val_frac)
    if scaler is None:
        last_train_day = cfg.lookback - 1 + split.train[-1]
        scaler = Scaler.fit(panel, last_train_day)
    industry = IndustryMap(industry.assignments, cfg.delta1, cfg.delta2)
    decay = decay_matrix(industry, panel.tickers).d
    days = day_data(make_windows(panel, cfg.lookback, scaler), decay)
    return Dataset(panel, industry, scaler, days, split.train, split.val, split.test)


def forward(window: Window, decay: np.ndarray, model: StockRanker) -> tuple[torch.Tensor, dict]:
    """Scores ``[N]`` for a single window."""
    batch = day_data([window], decay)
    y, aux = model(batch.features, batch.market, batch.base_adj)
    return y[0], {k: v[0] for k, v in aux.items()}


def objective(model: StockRanker, batch: DayData, cfg: TrainConfig,
              masks: torch.Tensor | None = None) -> tuple[torch.Tensor, torch.Tensor, dict]:
    y, aux = model(batch.features, batch.market, batch.base_adj, masks)
    total = loss_total(loss_rp(y, batch.returns, cfg.eta), loss_gib(aux["z"], aux["s"]), cfg.lam)
    if cfg.lambda_kappa:
        total = total + cfg.lambda_kappa * aux["kappa"].mean()
    return total, y, aux


def rank_ic(scores: np.ndarray, returns: np.ndarray) -> float:
    """Mean over days of the cross-sectional Spearman between scores and returns."""
    scores, returns = np.atleast_2d(scores), np.atleast_2d(returns)
    ics = [spearman_from_series(np.stack([s, r]))[0][0, 1] for s, r in zip(scores, returns)]
    return float(np.mean(ics)) if ics else float("nan")


def evaluate(model: StockRanker, batch: DayData, cfg: TrainConfig) -> tuple[float, float, np.ndarray]:
    with torch.no_grad():
        total, y, _ = objective(model, batch, cfg)
    y_np = y.numpy()
    return float(total), rank_ic(y_np, batch.returns.numpy()), y_np


@dataclass
class TrainResult:
    model: StockRanker
    log: list[dict[str, float]]
    data: Dataset
    config: TrainConfig
    best_epoch: int = 0
    stopped_early: bool = False
    extra: dict[str, Any] = field(default_factory=dict)


def build_model(cfg: TrainConfig) -> StockRanker:
    torch.manual_seed(cfg.seed)
    return StockRanker(cfg)


def train(panel: StockPanel, industry: IndustryMap, cfg: TrainConfig,
          data: Dataset | None = None) -> TrainResult:
    """Adam over shuffled mini-batches of whole trading days."""
    data = data or prepare(panel, industry, cfg)
    if not data.train:
        raise ConfigError("empty training split")
    model = build_model(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8)
    rng = np.random.default_rng(cfg.seed)
    val = data.days.subset(data.val) if data.val else None
    history: list[dict[str, float]] = []
    best_loss, best_state, best_epoch, stale = float("inf"), None, 0, 0
    stopped = False

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(data.train)
        losses, ics, weights = [], [], []
        model.train()
        for start in range(0, len(order), cfg.batch_days):
            idx = order[start:start + cfg.batch_days]
            batch = data.days.subset(idx)
            opt.zero_grad(set_to_none=False)
            try:
                total, y, _ = objective(model, batch, cfg)
            except TrainingDivergence as exc:
                raise TrainingDivergence(f"{exc} (epoch {epoch}, days {batch.t.tolist()})") from None
            if not torch.isfinite(total):
                raise TrainingDivergence(f"non-finite loss at epoch {epoch}, days {batch.t.tolist()}")
            total.backward()
            opt.step()
            losses.append(total.item())
            ics.append(rank_ic(y.detach().numpy(), batch.returns.numpy()))
            weights.append(len(idx))
        row = {"epoch": epoch,
               "train_loss": float(np.average(losses, weights=weights)),
               "train_ic": float(np.average(ics, weights=weights))}
        if val is not None:
            row["val_loss"], row["val_ic"], _ = evaluate(model, val, cfg)
        history.append(row)
        log.debug("epoch %d %s", epoch, row)

        if val is not None and cfg.patience is not None:
            if row["val_loss"] < best_loss:
                best_loss, best_epoch, stale = row["val_loss"], epoch, 0
                best_state = copy.deepcopy(model.state_dict())
            else:
                stale += 1
                if stale >= cfg.patience:
                    stopped = True
                    break

    if best_state is not None:
        model.load_state_dict(best_state)
    else:
        best_epoch = len(history)
    return TrainResult(model, history, data, cfg, best_epoch, stopped)


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tolerance: float

    @property
    def failures(self) -> list[str]:
        return [name for name, err in self.errors.items() if not err < self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    def raise_on_failure(self) -> None:
        if self.failures:
            worst = ", ".join(f"{n}={self.errors[n]:.3g}" for n in self.failures)
            raise AssertionError(f"gradient check failed for: {worst}")


def grad_check(model: StockRanker, batch: DayData, cfg: TrainConfig, tolerance: float = 1e-4,
               step: float = 1e-4) -> GradCheckReport:
    """Compare autograd against central differences for every registry tensor.

    The top-K masks are frozen at the unperturbed point. The error per tensor
    is ``max |analytic - numeric| / max(max |analytic|, max |numeric|)``.
    """
    params = registry(model)
    if any(p.dtype != torch.float64 for p in params.values()):
        raise TypeError("gradient check requires float64 parameters")
    with torch.no_grad():
        masks = model(batch.features, batch.market, batch.base_adj)[1]["masks"]
    model.zero_grad()
    total, _, _ = objective(model, batch, cfg, masks)
    total.backward()
    # unused parameters (the sparsifier when lambda_kappa = 0) have no grad
    analytic = {n: p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
                for n, p in params.items()}

    errors = {}
    with torch.no_grad():
        for name, p in params.items():
            numeric = torch.zeros_like(p)
            flat, nflat = p.view(-1), numeric.view(-1)
            for k in range(flat.numel()):
                orig = flat[k].item()
                flat[k] = orig + step
                up = objective(model, batch, cfg, masks)[0].item()
                flat[k] = orig - step
                down = objective(model, batch, cfg, masks)[0].item()
                flat[k] = orig
                nflat[k] = (up - down) / (2 * step)
            a = analytic[name]
            scale = max(a.abs().max().item(), numeric.abs().max().item())
            diff = (a - numeric).abs().max().item()
            errors[name] = diff / scale if scale > 0 else diff
    model.zero_grad()
    return GradCheckReport(errors, tolerance)


def save_checkpoint(path: str | Path, model: StockRanker, cfg: TrainConfig,
                    scaler: Scaler | None = None, **meta: Any) -> None:
    arrays = {f"param/{n}": p.detach().numpy() for n, p in registry(model).items()}
    if scaler is not None:
        arrays["scaler/mean"] = scaler.mean
        arrays["scaler/std"] = scaler.std
    header = {"version": CHECKPOINT_VERSION, "config": cfg.to_dict(),
              "shapes": {n: list(p.shape) for n, p in registry(model).items()}, **meta}
    arrays["meta"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> tuple[StockRanker, TrainConfig, Scaler | None, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path) as npz:
        meta = json.loads(npz["meta"].tobytes().decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        cfg = TrainConfig.from_dict(meta["config"])
        model = StockRanker(cfg)
        state = {k[len("param/"):]: torch.from_numpy(npz[k].copy())
                 for k in npz.files if k.startswith("param/")}
        scaler = Scaler(npz["scaler/mean"], npz["scaler/std"]) if "scaler/mean" in npz.files else None
    missing = set(registry(model)) ^ set(state)
    if missing:
        raise ValueError(f"checkpoint registry mismatch: {sorted(missing)}")
    model.load_state_dict(state)
    return model, cfg, scaler, meta
