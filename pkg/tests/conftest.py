import numpy as np
import pytest

from rsfbayes import ForcingConfig, RsfParams, SolverConfig
from rsfbayes.data_io import observation_times
from rsfbayes.inversion import ForwardModel

D_C_TRUE = 20.0


@pytest.fixture(scope="session")
def params():
    return RsfParams()


@pytest.fixture(scope="session")
def short_solver():
    """A 5 s window keeps unit tests fast while still exciting the slider."""
    return SolverConfig(t_end=5.0)


@pytest.fixture(scope="session")
def short_model(short_solver):
    times = observation_times(0.0, 5.0, 500)
    return ForwardModel(times, solver=short_solver)


@pytest.fixture(scope="session")
def full_model():
    """5000 samples over (0, 50] s with default physics; cached across tests."""
    return ForwardModel(observation_times(0.0, 50.0, 5000))


@pytest.fixture(scope="session")
def steady_model(short_solver):
    times = observation_times(0.0, 5.0, 200)
    return ForwardModel(times, forcing=ForcingConfig.constant(1.0), solver=short_solver)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report ------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report(capsys):
    """Record one PASS/FAIL line and echo it immediately."""

    def emit(tag: str, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
