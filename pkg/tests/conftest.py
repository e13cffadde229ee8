import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion; the line is printed in the terminal summary."""
    entry = {"name": request.node.name, "detail": ""}
    _ACCEPTANCE.append(entry)

    def note(detail):
        entry["detail"] = detail

    yield note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        for entry in _ACCEPTANCE:
            if entry["name"] == item.name:
                entry["passed"] = rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for entry in _ACCEPTANCE:
        status = "PASS" if entry.get("passed") else "FAIL"
        terminalreporter.write_line(f"{status}  {entry['name']}  {entry['detail']}")
