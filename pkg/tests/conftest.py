import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nsbf.mesh import adapt, build_coarse_mesh, uniform_refine
from nsbf.spaces import ModelParams

settings.register_profile(
    "nsbf",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("nsbf")

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def acceptance_lines():
    return ACCEPTANCE_LINES


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def square2():
    return build_coarse_mesh("unit_square", 2)


@pytest.fixture(scope="session")
def hanging_mesh():
    """2x2 square with the lower-left quad refined (two hanging parents)."""
    m = build_coarse_mesh("unit_square", 2)
    cell = next(i for i, leaf in enumerate(m.cell_leaf) if leaf == (0, 0, 0))
    return adapt(m, {cell})


@pytest.fixture(scope="session")
def lshape1():
    return uniform_refine(build_coarse_mesh("l_shape"))
