"""
Общие фикстуры тестов: фоны Казнера, калибровки, малые сетки
"""
import numpy as np
import pytest

from discretization import TorusGrid
from fuchsian import GaugeParams
from kasner import kasner_from_q

ANISO_Q = (0.5, 0.3, 0.2)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: долгие прогоны эволюции")


@pytest.fixture
def kd_aniso():
    return kasner_from_q(4, ANISO_Q)


@pytest.fixture
def kd_flrw():
    return kasner_from_q(4, [1.0 / 3.0] * 3)


@pytest.fixture
def gauge(kd_aniso):
    return GaugeParams.default(kd_aniso)


@pytest.fixture
def line_grid():
    """Плоская симметрия: зависимость только от x¹"""
    return TorusGrid(n_spatial=3, L=1.0, dims=(16, 1, 1))


@pytest.fixture
def cube_grid():
    return TorusGrid(n_spatial=3, L=1.0, dims=(8, 8, 8))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
