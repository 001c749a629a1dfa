_RESULTS = []


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _RESULTS.append((report.nodeid.split("::")[-1], report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _RESULTS:
        terminalreporter.write_line(f"{outcome.upper():7s} {name} ({duration:.1f}s)")
