import sys

import numpy as np
import pytest
import torch

from stockssm.config import TrainConfig
from stockssm.panel import gen_synthetic


@pytest.fixture(autouse=True)
def _float64():
    torch.set_default_dtype(torch.float64)
    yield


@pytest.fixture(scope="session")
def small_panel():
    return gen_synthetic(3, 8, 60)


@pytest.fixture
def tiny_cfg():
    return TrainConfig(lookback=8, epochs=2, d_model=8, d_out=4, d_state=4, heads=2,
                       gnn_layers=1, levels=2, batch_days=4, patience=None, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



def pytest_terminal_summary(terminalreporter):
    module = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
