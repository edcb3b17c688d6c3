import sys
from pathlib import Path

import hypothesis
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from meshqoe.dataset import default_synthetic_dataset  # noqa: E402
from meshqoe.forest import TrainConfig, train_forest  # noqa: E402

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def synthetic():
    return default_synthetic_dataset(seed=0, noise_sigma=0.2)


@pytest.fixture(scope="session")
def synthetic_forest(synthetic):
    X, y = synthetic.arrays()
    return train_forest(X, y, TrainConfig(seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and (report.when == "call" or report.outcome == "failed"):
        _acceptance[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in _acceptance.items():
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
