import numpy as np
import pytest

from src.core.hmm import stationary_spec
from src.models import HmmSpec


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run the slow acceptance checks')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def two_state():
    return HmmSpec.from_arrays(
        [0.5, 0.5],
        [[0.8, 0.2], [0.3, 0.7]],
        [[0.9, 0.1], [0.2, 0.8]],
    )


@pytest.fixture
def stationary_two_state():
    return stationary_spec([[0.8, 0.2], [0.3, 0.7]], [[0.9, 0.1], [0.2, 0.8]])


@pytest.fixture
def coin():
    """One hidden state, two equally likely symbols."""
    return HmmSpec.from_arrays([1.0], [[1.0]], [[0.5, 0.5]])
