import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict line: ``criterion(n, ok, detail)``."""

    def record(number, ok, detail):
        _LINES.append((number, "PASS" if ok else "FAIL", detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, verdict, detail in sorted(_LINES):
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {detail}")
