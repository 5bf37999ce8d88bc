"""Shared pytest plumbing: an end-of-run acceptance criteria report."""

CRITERIA_RESULTS = []


def record_criterion(number: int, description: str, passed: bool):
    CRITERIA_RESULTS.append(
        (number, f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] "
                 f"{description}"))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(CRITERIA_RESULTS):
        terminalreporter.write_line(line)
