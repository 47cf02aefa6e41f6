import numpy as np
import pytest

from mcmp2 import fixtures
from mcmp2.weights import WeightSpec

# oracle MP2 energies frozen from the deterministic path
E2_H2 = -0.013157870052637874
E2_HE = -0.011200122909936388
E2_SYNTH4C = -0.002717564833580086


@pytest.fixture(scope="session")
def h2():
    return fixtures.h2_spinors()


@pytest.fixture(scope="session")
def he():
    return fixtures.he_spinors()


@pytest.fixture(scope="session")
def synth4c():
    return fixtures.synthetic_4c_spinors()


@pytest.fixture(scope="session")
def h2_spec(h2):
    return WeightSpec.build(h2.molecule)


@pytest.fixture(scope="session")
def synth4c_spec(synth4c):
    return WeightSpec.build(synth4c.molecule)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
