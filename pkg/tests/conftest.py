import pytest

# (criterion label, passed, detail) appended by the acceptance tests
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


@pytest.fixture
def report_criterion():
    def record(label: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append((label, passed, detail))
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
