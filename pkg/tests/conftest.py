import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print the acceptance-criterion verdict lines after capture ends."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
