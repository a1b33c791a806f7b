import pytest

from functionals import ModelParams, get_constants, mu_inf_closed_form
from groundstate import default_grid, soliton_inf, solve_gradient_flow, solve_petviashvili


@pytest.fixture(scope="session")
def grid():
    return default_grid(3.0, 1.0)


@pytest.fixture(scope="session")
def params():
    return ModelParams(3.0, 8.0, 1.0)


@pytest.fixture(scope="session")
def constants_path(tmp_path_factory):
    return str(tmp_path_factory.mktemp("constants") / "constants.json")


@pytest.fixture(scope="session")
def consts(constants_path):
    return get_constants(3.0, constants_path)


@pytest.fixture(scope="session")
def q_inf(grid):
    return soliton_inf(3.0, mu_inf_closed_form(3.0, 1.0), grid)


@pytest.fixture(scope="session")
def gs(params, grid):
    return solve_petviashvili(params, grid)


@pytest.fixture(scope="session")
def gs_flow(params, grid):
    return solve_gradient_flow(params, grid)
