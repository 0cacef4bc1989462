import matplotlib
matplotlib.use('Agg')

import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow tests')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'): return
    skip_slow = pytest.mark.skip(reason='need --runslow option to run')
    for item in items:
        if 'slow' in item.keywords: item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture(scope='session')
def tiny_pairs():
    '''(train, test) of 10 synthetic 8x8 pairs.'''
    from thincloud.data.dataset import make_dataset
    return make_dataset(10, side=8, seed=7)


@pytest.fixture
def tiny_gen_cfg():
    from thincloud.model.network import GeneratorConfig
    return GeneratorConfig(base_channels=4, levels=2, heads=2, side=8)
