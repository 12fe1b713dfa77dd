from __future__ import annotations

import pytest
from hypothesis import settings

settings.register_profile("catnet", max_examples=40, deadline=None)
settings.load_profile("catnet")

ACCEPTANCE_LINES: list = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
