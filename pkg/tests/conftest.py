# One PASS/FAIL line per acceptance criterion in the terminal summary.
_criteria = {}
_outcomes = {}


def pytest_collection_modifyitems(items):
    for item in items:
        if "test_acceptance.py" in item.nodeid:
            doc = item.function.__doc__ or item.name
            _criteria[item.nodeid] = doc.strip().splitlines()[0]


def pytest_runtest_logreport(report):
    if report.nodeid not in _criteria:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes.setdefault(report.nodeid, report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, text in _criteria.items():
        if nodeid in _outcomes:
            mark = "PASS" if _outcomes[nodeid] == "passed" else "FAIL"
            terminalreporter.write_line(f"{mark}  {text}")
