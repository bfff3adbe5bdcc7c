from importlib import resources
from pathlib import Path

import pytest

from ampsizer.metrics import soo_constraints
from ampsizer.opt import SOO, Recorder
from ampsizer.sim import SurrogateBackend, SurrogateConfig, sweep
from ampsizer.space import experiment_corners, experiment_overrides, get_node, space_from_testbench
from ampsizer.testbench import parse_testbench, set_load_cap

DATA = Path(str(resources.files("ampsizer") / "data"))
FIXTURES = Path(__file__).parent / "fixtures"
REFERENCE_TB = DATA / "nmcnr_sky130.tb"


@pytest.fixture(scope="session")
def reference_text() -> str:
    return REFERENCE_TB.read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def reference_tb(reference_text):
    return parse_testbench(reference_text)


@pytest.fixture(scope="session")
def loaded_tb(reference_tb):
    """Reference deck with the 100 pF load used by the experiments."""
    return set_load_cap(reference_tb, 100e-12)


@pytest.fixture(scope="session")
def space(loaded_tb):
    return space_from_testbench(loaded_tb, get_node("n130"), experiment_overrides())


@pytest.fixture(scope="session")
def backend(space):
    return SurrogateBackend(SurrogateConfig.for_space(space))


@pytest.fixture(scope="session")
def evaluator(backend, loaded_tb):
    corners = experiment_corners()

    def evaluate(point):
        return sweep(backend, loaded_tb, point, corners).records
    return evaluate


@pytest.fixture
def make_recorder(space, evaluator):
    def make(max_fe, **kw):
        return Recorder(space, evaluator, soo_constraints(), SOO, max_fe, **kw)
    return make


# One verdict line per acceptance criterion, printed after the run.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
