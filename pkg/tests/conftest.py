import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report(number, label, passed, detail)``."""

    def _report(number, label, passed, detail=""):
        ACCEPTANCE_LINES.append((number, label, bool(passed), detail))
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, label, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda x: x[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {label}: {detail}")
