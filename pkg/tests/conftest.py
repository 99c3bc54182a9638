import numpy as np
import pytest

from minkflow.geometry import disk, ellipse, make_body
from minkflow.torsion import solve_torsion


@pytest.fixture(scope="session")
def unit_disk():
    return make_body(disk(1.0, 256))


@pytest.fixture(scope="session")
def ellipse21():
    return make_body(ellipse(2.0, 1.0, 256))


@pytest.fixture(scope="session")
def disk_q2(unit_disk):
    return solve_torsion(unit_disk, 2.0, 0.04)


@pytest.fixture(scope="session")
def disk_q3(unit_disk):
    return solve_torsion(unit_disk, 3.0, 0.04)


@pytest.fixture(scope="session")
def ellipse_q2(ellipse21):
    return solve_torsion(ellipse21, 2.0, 0.04)


@pytest.fixture(scope="session")
def ellipse_q3(ellipse21):
    return solve_torsion(ellipse21, 3.0, 0.04)


@pytest.fixture
def grid256():
    return 2.0 * np.pi * np.arange(256) / 256
