import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from blockperf.formats import default_hardware  # noqa: E402

ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def hw():
    return default_hardware()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
