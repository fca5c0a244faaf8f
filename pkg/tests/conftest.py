import numpy as np
import pytest

# acceptance criteria append (name, status, detail) here; printed at the end of the run
ACCEPTANCE_RESULTS = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{status}  {name}: {detail}")
