import pytest

CRITERIA = {}


@pytest.fixture
def report(request):
    """Record and print one pass/fail line for an acceptance criterion, then assert it."""

    def _report(number, passed, detail):
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {detail}"
        CRITERIA[number] = line
        print(line)
        assert passed, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
