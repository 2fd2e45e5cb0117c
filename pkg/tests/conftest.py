from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fransonsim.config import load_config  # noqa: E402


@pytest.fixture(scope="session")
def desk_config():
    return load_config(profile="desk")


@pytest.fixture
def rng():
    return __import__("numpy").random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
