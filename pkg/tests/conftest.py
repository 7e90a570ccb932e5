import pytest

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, title): acceptance criterion id and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (report.when == "call" or report.failed):
        return
    cid, title = mark.args
    # an expected failure still means the criterion is not met
    passed = report.passed and not hasattr(report, "wasxfail")
    entry = _criteria.setdefault(cid, {"title": title, "passed": True, "details": []})
    entry["passed"] &= passed
    detail = getattr(item, "criterion_detail", "")
    if detail:
        entry["details"].append(detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_criteria):
        entry = _criteria[cid]
        line = f"{cid} {'PASS' if entry['passed'] else 'FAIL'}  {entry['title']}"
        if entry["details"]:
            line += f"  ({'; '.join(entry['details'])})"
        terminalreporter.write_line(line)
