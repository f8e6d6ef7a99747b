import numpy as np
import pytest

#: (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def report():
    """Record one acceptance line; returns the flag so tests can assert on it."""

    def record(criterion: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append((criterion, bool(ok), detail))
        print(f"{criterion} {'PASS' if ok else 'FAIL'} {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda x: x[0]):
        terminalreporter.write_line(f"{criterion:<18} {'PASS' if ok else 'FAIL'}  {detail}")
