import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

CRITERIA = []


@pytest.fixture
def report():
    """Record one ``CRITERION n: PASS/FAIL`` line and echo it."""
    def _report(n, ok, detail):
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
        CRITERIA.append((n, line))
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(CRITERIA, key=lambda x: x[0]):
        terminalreporter.write_line(line)
