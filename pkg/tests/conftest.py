import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "seen": False})
    if report.when == "call":
        entry["seen"] = True
    if report.failed:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if e["ok"] and e["seen"] else ("FAIL" if not e["ok"] else "SKIP")
        terminalreporter.write_line(f"{status}  criterion {number:2d}: {e['title']}")
