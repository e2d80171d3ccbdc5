import pytest

_RESULTS: list[str] = []


@pytest.fixture
def record(request):
    """Print and remember one PASS/FAIL line for an acceptance criterion."""

    def _record(cid: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {cid}: {detail}"
        _RESULTS.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)
