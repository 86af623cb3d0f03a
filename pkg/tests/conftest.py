import pytest

_criteria: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an acceptance criterion.

    The test body calls ``report(ok, detail)`` once; the line is printed
    immediately and repeated in the terminal summary.
    """
    name = request.node.name

    def report(ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        print(line)
        _criteria.append((name, ok, detail))

    return report


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _criteria:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
