from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from deleverage.model import load_instance

INSTANCES = Path(__file__).resolve().parents[1] / "instances"

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def instance(name: str):
    return load_instance(INSTANCES / f"{name}.json")


@pytest.fixture(scope="session")
def ex1():
    return instance("example1")


@pytest.fixture(scope="session")
def ex2():
    return instance("example2")


@pytest.fixture(scope="session")
def ex3():
    return instance("example3")


@pytest.fixture(scope="session")
def ex4():
    return instance("example4")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
