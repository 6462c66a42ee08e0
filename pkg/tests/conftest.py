import numpy as np
import pytest

from hedonia.data import build_dataset
from hedonia.synth import synth_generate

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_city():
    """200 streets, 16 px images: enough for plumbing tests, cheap to train on."""
    return synth_generate(n_streets=200, seed=3, image_side=16)


@pytest.fixture(scope="session")
def small_dataset(small_city):
    return build_dataset(small_city.streets, small_city.images)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
