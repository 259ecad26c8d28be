import pytest

# criterion number -> {"title", "outcomes", "details"}
CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test gates")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number, title = marker.args
    entry = CRITERIA.setdefault(number, {"title": title, "outcomes": [], "details": []})
    entry["outcomes"].append(report.passed)
    entry["details"] += [v for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        entry = CRITERIA[number]
        verdict = "PASS" if entry["outcomes"] and all(entry["outcomes"]) else "FAIL"
        detail = "; ".join(entry["details"])
        terminalreporter.write_line(f"{verdict} criterion {number:2d}: {entry['title']}"
                                    + (f" [{detail}]" if detail else ""))
