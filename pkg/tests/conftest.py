"""Echo the acceptance verdict lines after the run.

Stdout of passing tests is captured, so the one-line-per-criterion
verdicts recorded by the acceptance battery are replayed here as a
terminal section.
"""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", []) if module else []
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for line in verdicts:
        terminalreporter.write_line(line)
