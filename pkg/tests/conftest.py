import pytest

_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion and return the verdict."""

    def report(name: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
