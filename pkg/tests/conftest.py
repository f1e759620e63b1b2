import numpy as np
import pytest

from viewsynth.geometry import ConeBeamGeometry
from viewsynth.volume import Grid

# (criterion, passed, detail) rows collected by test_acceptance.py
ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_geom():
    return ConeBeamGeometry(det_rows=24, det_cols=32, pixel_pitch=(8.0, 8.0))


@pytest.fixture
def small_grid():
    return Grid.centered((16, 16, 16), (6.0, 6.0, 6.0))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{status:8s} {name}: {detail}")
