import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from meanfield.domain import DiscreteDomain, EmbeddedCurve
from meanfield.measure import IntensityMeasure

PI = math.pi


@pytest.fixture(scope="session")
def disk64():
    return DiscreteDomain("disk", {}, 1 / 64)


@pytest.fixture(scope="session")
def disk128():
    return DiscreteDomain("disk", {}, 1 / 128)


@pytest.fixture(scope="session")
def disk32():
    return DiscreteDomain("disk", {}, 1 / 32)


@pytest.fixture(scope="session")
def square32():
    return DiscreteDomain("rectangle", {}, 1 / 32)


@pytest.fixture(scope="session")
def annulus64():
    return DiscreteDomain("annulus", {}, 1 / 64)


@pytest.fixture(scope="session")
def annulus_curve(annulus64):
    return EmbeddedCurve.default(annulus64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def dirac():
    return IntensityMeasure.dirac()


@pytest.fixture(scope="session")
def uniform():
    return IntensityMeasure.uniform()


@pytest.fixture(scope="session")
def mixed():
    return IntensityMeasure.from_parts([(0.9, 0.5), (1.0, 0.5)])
