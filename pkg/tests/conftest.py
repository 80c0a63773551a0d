import pytest

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def report(request):
    """Attach measured quantities to the criterion line printed at the end of the run."""
    marker = request.node.get_closest_marker("criterion")
    entry = _CRITERIA.setdefault(marker.args[0], {"title": marker.args[1], "details": []})

    def add(name, value, tol=None):
        text = f"{name}={value:.3g}" if isinstance(value, float) else f"{name}={value}"
        if tol is not None:
            text += f" (tol {tol:g})"
        entry["details"].append(text)
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and not rep.failed:
        return
    entry = _CRITERIA.setdefault(marker.args[0], {"title": marker.args[1], "details": []})
    entry["passed"] = rep.passed and entry.get("passed", True)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        verdict = "PASS" if entry.get("passed") else "FAIL"
        line = f"criterion {number:2d} {verdict}  {entry['title']}"
        if entry["details"]:
            line += ": " + ", ".join(entry["details"])
        terminalreporter.write_line(line)
