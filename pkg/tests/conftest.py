import pytest

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "notes": []})
    if report.failed or report.skipped:
        entry["ok"] = False
    notes = [v for k, v in item.user_properties if k == "measured"]
    if report.when == "call":
        entry["notes"].extend(notes)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        line = f"criterion {number}: {'PASS' if e['ok'] else 'FAIL'}  {e['title']}"
        terminalreporter.write_line(line)
        for note in e["notes"]:
            terminalreporter.write_line(f"    {note}")
