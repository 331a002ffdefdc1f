import numpy as np
import pytest

from pass_tradeoff.model import SystemParams, UserSet


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_users():
    return UserSet(np.array([[2.0, 3.0], [7.5, 8.0]]))


# one summary line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}


@pytest.fixture
def record_criterion(capsys):
    def record(number: int, title: str, passed: bool, detail: str):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES[number] = line
        with capsys.disabled():
            print("\n" + line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
