_OUTCOMES = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    failed = report.failed or (report.when == "call" and report.skipped)
    if report.when == "call" or failed:
        _OUTCOMES[name] = "FAIL" if failed else _OUTCOMES.get(name, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_OUTCOMES):
        _, _, num, label = name.split("_", 3)
        terminalreporter.write_line(f"{_OUTCOMES[name]} {int(num):2d} {label}")
