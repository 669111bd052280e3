import re

_LINE = re.compile(r"^(PASS|FAIL) criterion \d+:.*$", re.MULTILINE)
_acceptance = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _acceptance.extend(m.group(0) for m in _LINE.finditer(report.capstdout))


def pytest_terminal_summary(terminalreporter):
    if _acceptance:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance:
            terminalreporter.write_line(line)
