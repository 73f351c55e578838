import numpy as np
import pytest

from sigmak import _kernels
from sigmak.geometry import make_metric
from sigmak.grids import make_grid


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # trigger jit compilation outside any timed test
    _kernels.esp_table(np.ones((4, 3)))
    _kernels.esp_deleted_table(np.ones((4, 3)))


@pytest.fixture(scope="session")
def torus3():
    return make_grid("periodic_torus", 3, 9)


@pytest.fixture(scope="session")
def flat_torus3(torus3):
    return make_metric(torus3, "flat")


@pytest.fixture(scope="session")
def sphere17():
    grid = make_grid("sphere_chart", 3, 17, 1.0)
    return make_metric(grid, "round_normal")


@pytest.fixture(scope="session")
def half_ball17():
    return make_grid("half_ball_fermi", 3, 17, 1.0)


from sigmak.cli import neumann_modes  # noqa: E402  (shared perturbation builder)
