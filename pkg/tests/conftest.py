import pytest

_REPORT: list[str] = []


@pytest.fixture(scope="session")
def criterion_report():
    """Collects one verdict line per acceptance criterion."""

    def record(label: str, ok: bool, detail: str) -> bool:
        _REPORT.append(f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
