import numpy as np
import pytest

from ipeq import GeometryModel, build_operator, operator_from_spec


@pytest.fixture(scope="session")
def m1():
    return operator_from_spec("M1")


@pytest.fixture(scope="session")
def m2():
    return operator_from_spec("M2")


@pytest.fixture(scope="session")
def small_interval():
    return build_operator(GeometryModel("interval", 120))


@pytest.fixture(scope="session")
def small_disc():
    return build_operator(GeometryModel("disc", 60, mode_cutoff=2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end criteria on the reference models")


def pytest_terminal_summary(terminalreporter):
    verdicts = [value for key in ("passed", "failed") for rep in terminalreporter.stats.get(key, []) if rep.when == "call"
                for name, value in getattr(rep, "user_properties", []) if name == "verdict"]
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in sorted(verdicts, key=lambda s: s.split("]")[0][-2:]):
            terminalreporter.write_line(line)
