import sys


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance-criteria PASS/FAIL lines after capture ends."""
    for name, mod in sys.modules.items():
        if name.endswith("test_acceptance"):
            lines = getattr(mod, "REPORT_LINES", [])
            if lines:
                terminalreporter.section("acceptance criteria")
                for line in lines:
                    terminalreporter.write_line(line)
            break
