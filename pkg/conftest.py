#!/usr/bin/env python3
"""
Shared pytest fixtures
A fast single-input toy system plus the two bundled examples, each built once per session
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from assets import build_assets
from config import ExperimentConfig, bundled_examples
from geometry import HPolytope
from pclf import LinearSystem


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="also run tests marked slow")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: builds the full example assets (minutes)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def toy_config(**overrides) -> ExperimentConfig:
    fields = dict(
        name="toy",
        A=np.array([[1.1, 0.2], [0.0, 0.95]]),
        B=np.array([[0.5], [1.0]]),
        X=HPolytope.box([-1.0, -1.0], [1.0, 1.0]),
        U=HPolytope.box([-1.0], [1.0]),
        Q=np.eye(2),
        R=np.array([[0.1]]),
        horizon=2,
        eps=0.1,
        gain_bound=None,
        controllers=("standard", "mpc1", "mpc1a", "mpc1b", "mpc2", "mpc2a", "tilde"),
        runs=3,
        steps=40,
        seed=7,
        levels=6,
        terminal_points=48,
        grid=15,
        sres_deltas=(1e-2, 1e-4),
        sres_runs=4,
        sres_steps=30,
    )
    fields.update(overrides)
    return ExperimentConfig(**fields)


@pytest.fixture(scope="session")
def toy():
    return toy_config()


@pytest.fixture(scope="session")
def toy_sys(toy):
    return LinearSystem(toy.A, toy.B)


@pytest.fixture(scope="session")
def toy_assets(toy):
    return build_assets(toy)


@pytest.fixture(scope="session")
def examples():
    return bundled_examples()


@pytest.fixture(scope="session")
def example1_assets(examples):
    return build_assets(examples["example1"])


@pytest.fixture(scope="session")
def example2_assets(examples):
    return build_assets(examples["example2"])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
