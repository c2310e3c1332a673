import pytest

# one summary line per acceptance criterion, filled in by test_acceptance
_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def record():
    """Record the outcome line of an acceptance criterion and echo it."""
    def _record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[n] = line
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])
