"""Per-criterion pass/fail reporting for the acceptance suite."""

import pytest

_CRITERIA: dict[str, dict] = {}


@pytest.fixture
def criterion(request):
    """Register the running test under an acceptance criterion id."""

    def register(cid: str, title: str) -> None:
        entry = _CRITERIA.setdefault(cid, {"title": title, "nodes": []})
        entry["nodes"].append(request.node.nodeid)

    return register


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" or (report.when == "setup" and report.failed):
        item.config.stash.setdefault(_OUTCOMES, {})[item.nodeid] = report.passed


_OUTCOMES = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    outcomes = config.stash.get(_OUTCOMES, {})
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=int):
        entry = _CRITERIA[cid]
        ok = all(outcomes.get(n, False) for n in entry["nodes"])
        terminalreporter.write_line(f"criterion {cid:>2}: {'PASS' if ok else 'FAIL'}  {entry['title']}")
