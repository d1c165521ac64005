import pytest

from fwemerge.params import ModelParams, SeedSpec

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def unit_rates() -> ModelParams:
    return ModelParams(c=1.0, s=1.0, d=1.0, m=1.0)


@pytest.fixture
def seed() -> SeedSpec:
    return SeedSpec(20240601, 0, "tests")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
