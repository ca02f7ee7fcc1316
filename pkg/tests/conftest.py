import numpy as np
import pytest

from wavedet import FeaturePipe, NoiseModel, make_chirp, parse_family


@pytest.fixture(scope="session")
def db5():
    return parse_family("db5")


@pytest.fixture(scope="session")
def haar():
    return parse_family("haar")


@pytest.fixture(scope="session")
def noise():
    return NoiseModel(sigma_n=1.0)


@pytest.fixture(scope="session")
def pulse256():
    return make_chirp(256)


@pytest.fixture(scope="session")
def pipe34(db5):
    return FeaturePipe.for_scales(256, db5, (3, 4))


@pytest.fixture(scope="session")
def details34(pipe34, pulse256):
    return pipe34.details_of(pulse256)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
