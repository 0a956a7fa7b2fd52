"""Collects acceptance verdict lines and prints them after the run."""

import pytest

VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
        print(line)
        VERDICTS.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
