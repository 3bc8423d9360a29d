import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from absdyn.measures import exponential_grid, uniform_grid  # noqa: E402

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def exp1():
    return exponential_grid(1.0, 30.0, 2**14)


@pytest.fixture(scope="session")
def exp2():
    return exponential_grid(2.0, 30.0, 2**14)


@pytest.fixture(scope="session")
def exp3():
    return exponential_grid(3.0, 30.0, 2**14)


@pytest.fixture(scope="session")
def exp1_fine():
    # h^2/12 ~ 3e-10 keeps the grid mean within 1e-9 of 1
    return exponential_grid(1.0, 32.0, 2**19)


@pytest.fixture(scope="session")
def unif():
    return uniform_grid(0.0, 1.0, n=2**12)


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance" in report.nodeid and name.startswith("test_criterion_"):
        if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
            _ACCEPTANCE[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        num, _, title = name[len("test_criterion_") :].partition("_")
        verdict = "PASS" if _ACCEPTANCE[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {int(num):2d} {title.replace('_', ' '):<40} {verdict}")
