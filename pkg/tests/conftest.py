from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
WORKED = ROOT / "data" / "worked_example"

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def worked_dir() -> Path:
    return WORKED


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
