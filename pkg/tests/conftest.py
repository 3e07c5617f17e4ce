import pytest

ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def acceptance_line():
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""
    def record(name, passed, detail=""):
        ACCEPTANCE[name] = f"{'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip()
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for name in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(ACCEPTANCE[name])
