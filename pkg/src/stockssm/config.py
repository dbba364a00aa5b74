"""Configuration dataclasses and the ``key = value`` config-file reader."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass
class TrainConfig:
    lookback: int = 20
    learning_rate: float = 0.01
    epochs: int = 100
    seed: int = 0
    eta: float = 3.0
    lam: float = 1.0
    lambda_kappa: float = 0.0
    tau: float = 1.0
    delta1: float = 0.5
    delta2: float = 0.1
    levels: int = 2
    heads: int = 4
    gnn_layers: int = 2
    d_model: int = 64
    d_out: int = 32
    d_state: int = 16
    inception_channels: int = 4
    batch_days: int = 8
    patience: int | None = 10
    train_frac: float = 4 / 6
    val_frac: float = 1 / 6
    missing: str = "reject"
    top_k: int = 9

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        positive = ("lookback", "epochs", "levels", "heads", "gnn_layers", "d_model",
                    "d_out", "d_state", "inception_channels", "batch_days", "top_k")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("learning_rate", "eta", "lam", "lambda_kappa"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if not 0.0 <= self.delta2 <= self.delta1 <= 1.0:
            raise ConfigError(f"need 0 <= delta2 <= delta1 <= 1, got {self.delta1}, {self.delta2}")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be >= 1 or None")
        if not (0 < self.train_frac < 1 and 0 <= self.val_frac < 1
                and self.train_frac + self.val_frac <= 1):
            raise ConfigError("train_frac/val_frac must describe a chronological split")
        if self.missing not in ("reject", "ffill"):
            raise ConfigError(f"missing must be 'reject' or 'ffill', got {self.missing!r}")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def _coerce(raw: str, default: Any, name: str) -> Any:
    raw = raw.strip()
    if raw.lower() in ("none", "null"):
        return None
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw.strip("\"'")


def read_config_file(path: str | Path, base: TrainConfig | None = None) -> TrainConfig:
    """Read ``key = value`` lines (``#`` comments allowed) over ``base``.

    Keys are TrainConfig field names; unknown keys are rejected.
    """
    base = base or TrainConfig()
    values = base.to_dict()
    defaults = TrainConfig().to_dict()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in values:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        ref = defaults[key] if defaults[key] is not None else 0
        values[key] = _coerce(raw, ref, key)
    return TrainConfig.from_dict(values)


def write_config(cfg: TrainConfig, path: str | Path, **extra: Any) -> None:
    payload = {"train": cfg.to_dict(), **extra}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class RegimeConfig:
    """Segments of the synthetic market factor, plus the factor-model scales.

    ``signal`` scales a persistent per-stock order-flow factor that loads on
    log-volume (``flow_loading``) and temporarily shifts the next day's price
    level; 0 makes returns unpredictable from the panel. ``volume_noise`` is the log-volume
    noise scale and ``volume_reaction`` the volume response to ``|return|``.

    ``segments`` holds ``(start, end, kind)`` day ranges with ``kind`` in
    ``{"rising", "falling"}``; days outside every segment are "rising".
    """

    segments: tuple[tuple[int, int, str], ...] | None = None
    rising_drift: float = 0.0005
    falling_drift: float = -0.004
    rising_vol: float = 0.006
    falling_vol: float = 0.03
    industry_vol: float = 0.006
    idio_vol: float = 0.012
    n_primary: int = 3
    n_secondary: int = 2
    signal: float = 0.05
    flow_persistence: float = 0.5
    flow_loading: float = 0.5
    volume_noise: float = 0.05
    volume_reaction: float = 1.0

    def resolved_segments(self, n_days: int) -> tuple[tuple[int, int, str], ...]:
        if self.segments is None:
            third = n_days // 3
            return ((0, third, "rising"), (third, 2 * third, "falling"), (2 * third, n_days, "rising"))
        out = []
        last_end = 0
        for start, end, kind in sorted(self.segments):
            if kind not in ("rising", "falling"):
                raise ConfigError(f"unknown regime kind {kind!r}")
            if not 0 <= start < end <= n_days:
                raise ConfigError(f"regime bounds ({start}, {end}) outside [0, {n_days}]")
            if start < last_end:
                raise ConfigError(f"regime ({start}, {end}) overlaps the previous segment")
            out.append((start, end, kind))
            last_end = end
        return tuple(out)
