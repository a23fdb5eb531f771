import numpy as np
import pytest

from brushhom.geometry import ModelTooth, cylinder, place_periodic
from brushhom.meshing import mesh_brush


def stacked_cylinder(split=0.5, height=1.0):
    """Unit-width cylinder with collinear side vertices at y=split: two edges in series."""
    v = [(-0.5, 0.0), (0.5, 0.0), (0.5, split), (0.5, height), (-0.5, height), (-0.5, split)]
    return ModelTooth(np.array(v), (-0.5, 0.5), height, 0.6, split, name="stacked")


@pytest.fixture(scope="session")
def brush4():
    spec = place_periodic((0.0, 1.0), 0.25, 0.5, cylinder())
    return mesh_brush(spec, 1 / 16, 1 / 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
