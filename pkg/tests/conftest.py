import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line, then return the outcome for asserting."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _VERDICTS.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_VERDICTS):
        terminalreporter.write_line(line)
