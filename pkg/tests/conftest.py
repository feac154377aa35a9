import pytest


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def record(request):
    """Print and keep one PASS/FAIL line per acceptance criterion."""

    def _record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config._acceptance_lines.append(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
