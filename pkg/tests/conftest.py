"""Shared test plumbing: acceptance verdict collection.

Each acceptance criterion records a single PASS/FAIL line; the lines are
printed inside the test (visible with -s or on failure) and re-emitted in
a terminal summary section so a plain `pytest -v` run always shows them.
"""

import pytest

VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def _record(num: int, label: str, checks: list[tuple[str, bool]]):
        ok = all(flag for _, flag in checks)
        line = f"criterion {num:02d} {label}: {'PASS' if ok else 'FAIL'}"
        VERDICTS.append(line)
        print(line)
        failed = [name for name, flag in checks if not flag]
        assert ok, f"criterion {num} failed sub-checks: {failed}"

    return _record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
