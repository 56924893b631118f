import numpy as np
import pytest

_VERDICTS = []


@pytest.fixture
def unit_grid():
    return np.linspace(0.0, 1.0, 101)


@pytest.fixture(scope="session")
def verdict():
    """verdict(criterion, ok, detail) prints one PASS/FAIL line and records it for the summary."""
    def record(criterion, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        print(line)
        _VERDICTS.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
