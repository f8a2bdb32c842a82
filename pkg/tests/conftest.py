import numpy as np
import pytest

from copo.toysystems import (
    fixture_t1_plan,
    fixture_t1_scenario,
    fixture_t1_system,
)


@pytest.fixture(scope="session")
def t1_system():
    return fixture_t1_system()


@pytest.fixture
def t1_scenario():
    return fixture_t1_scenario()


@pytest.fixture
def t1_plan():
    return fixture_t1_plan()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
