import pytest

_criteria = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(k, passed, detail)."""
    def record(k, passed, detail):
        _criteria[k] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_criteria):
        ok, detail = _criteria[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
