from __future__ import annotations

import numpy as np
import pytest

from gnull.datagen import DgpConfig, generate_dataset

ACCEPTANCE_LINES: list[str] = []


def pytest_addoption(parser):
    parser.addoption("--scale", choices=["desk", "paper"], default="desk",
                     help="'paper' also runs the hours-long full-scale reproduction")
    parser.addoption("--reference-summary", default=None,
                     help="summary.csv of an earlier full-scale simulate run to check instead of rerunning")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: takes more than a few seconds")
    config.addinivalue_line("markers", "acceptance: exit criteria")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def binary_k1_data():
    return generate_dataset(DgpConfig.for_kind("binary", K=1, n=20_000, master_seed=7))


@pytest.fixture(scope="session")
def continuous_k5_data():
    return generate_dataset(DgpConfig.for_kind("continuous", K=5, n=3_000, master_seed=8))
