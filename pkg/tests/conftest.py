import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    """Record ``(label, passed, detail)`` for the acceptance summary."""
    def record(label, passed, detail=""):
        _CRITERIA.append((label, bool(passed), detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")
