import pytest

_LINES = {}


@pytest.fixture(scope="session")
def criterion():
    """record(number, title, ok, detail): one pass/fail line per criterion."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        _LINES[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_LINES):
        terminalreporter.write_line(_LINES[number])
