import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from floquet_ladder.ladder import LadderConfig  # noqa: E402


@pytest.fixture
def cfg4():
    """Small symmetric ladder at a comfortable drive frequency."""
    return LadderConfig(L=4, omega=8 * math.pi)


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
