"""Print a one-line verdict per acceptance criterion at the end of the run."""
import re

_RESULTS = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_ac(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _RESULTS[key] = report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for (n, name), outcome in sorted(_RESULTS.items()):
        terminalreporter.write_line(f"AC{n:<3d}{outcome:<8s}{name.replace('_', ' ')}")
