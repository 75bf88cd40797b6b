import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lite_tsc import architectures as A  # noqa: E402
from lite_tsc.data import make_synthetic, stratified_split, znormalize  # noqa: E402
from lite_tsc.trainer import TrainConfig, train  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic():
    """The 3-class ramp/bump dataset, z-normalized and split 80/20 with seed 0."""
    ds = znormalize(make_synthetic(300, 128, 0.2, seed=0))
    return stratified_split(ds, 0.2, seed=0)


@pytest.fixture(scope="session")
def small_synthetic():
    ds = znormalize(make_synthetic(60, 48, 0.2, seed=3))
    return stratified_split(ds, 0.2, seed=3)


@pytest.fixture(scope="session")
def trained_small(small_synthetic):
    """A LITE model briefly trained on the small synthetic set, plus its history."""
    train_ds, _ = small_synthetic
    model = A.build_model(A.get_config("lite"), 1, 3, seed=0)
    return train(model, train_ds, TrainConfig(epochs=15, seed=0))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance")
        for line in results:
            terminalreporter.write_line(line)
