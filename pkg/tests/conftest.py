"""Shared acceptance-report plumbing: criterion verdicts echo into the
terminal summary regardless of capture settings."""

CRITERION_LINES = []


def record_criterion(line: str) -> None:
    CRITERION_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if not CRITERION_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in CRITERION_LINES:
        terminalreporter.write_line(line)
