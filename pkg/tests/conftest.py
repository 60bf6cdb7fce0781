import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

#: "PASS/FAIL criterion ..." lines recorded by the acceptance suite
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
