import hypothesis
import numpy as np

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=25)
hypothesis.settings.register_profile("thorough", max_examples=200)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False)

hypothesis.settings.load_profile("fast")

_criterion_lines = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    for line in report.capstdout.splitlines():
        if line.startswith("criterion "):
            _criterion_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    # Echo the acceptance battery verdicts, which default capture hides.
    if not _criterion_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(set(_criterion_lines),
                       key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.line(line)
