"""Market-aware stock graphs, multi-level selective SSM ranking, and top-k backtests."""

from .config import ConfigError, RegimeConfig, TrainConfig
from .panel import IndustryMap, StockPanel, Window, gen_synthetic, load_panel, make_windows, market_index

__all__ = [
    "ConfigError", "RegimeConfig", "TrainConfig", "IndustryMap", "StockPanel", "Window",
    "gen_synthetic", "load_panel", "make_windows", "market_index",
]
__version__ = "0.1.0"
