import numpy as np
import pytest

from evolvesurf import make_chart, make_diffusion, make_grid


@pytest.fixture
def unit_grid():
    return make_grid((0.0, 1.0, 0.0, 1.0), 16, 16)


@pytest.fixture
def flat():
    return make_chart("flat_static", horizon=1.0)


@pytest.fixture
def iso():
    return make_chart("isotropic_scaling", horizon=1.0, gamma=1.0)


@pytest.fixture
def graph():
    return make_chart("graph_oscillation", horizon=3.0, epsilon=0.05, omega=1.0)


@pytest.fixture
def const_kappa():
    return make_diffusion("constant", value=1.0)


@pytest.fixture
def eigenmode():
    def build(grid):
        X1, X2 = grid.interior_mesh()
        return (np.sin(np.pi * X1) * np.sin(np.pi * X2)).ravel()
    return build
