import pytest

from asfkit.system import tipping_pitchfork, tracking_cubic


@pytest.fixture(scope="session")
def tipping():
    return tipping_pitchfork(A=0.25)


@pytest.fixture(scope="session")
def tracking():
    return tracking_cubic(A=0.25)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results is None:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 9):
        missing = f"criterion {n}: FAIL (no result recorded: errored or not selected)"
        terminalreporter.write_line(results.get(n, missing))
