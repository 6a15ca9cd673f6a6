import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record a one-line verdict for an acceptance criterion and return it."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(n: int, ok: bool, detail: str) -> bool:
        lines.append((n, f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _n, line in sorted(lines):
            terminalreporter.write_line(line)
