import pathlib

import numpy as np
import pytest

from greenlight import netmodel

REPO = pathlib.Path(__file__).resolve().parent.parent
SCENARIOS = REPO / "scenarios"


@pytest.fixture(scope="session")
def single_text() -> str:
    return (SCENARIOS / "single.xn").read_text()


@pytest.fixture(scope="session")
def grid_text() -> str:
    return (SCENARIOS / "grid2x2.xn").read_text()


@pytest.fixture()
def single_scenario(single_text) -> netmodel.Scenario:
    return netmodel.load_scenario(single_text)


def make_rng(seed: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
