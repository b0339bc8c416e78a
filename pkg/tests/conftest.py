"""Collects the one-line acceptance verdicts and repeats them in the terminal summary."""

import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def record(number: int, title: str, passed: bool, detail: str = "", soft: bool = False) -> None:
        status = "PASS" if passed else ("WARN" if soft else "FAIL")
        line = f"criterion {number:>2} [{status}] {title}" + (f": {detail}" if detail else "")
        _VERDICTS.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
