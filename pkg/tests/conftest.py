import os

import pytest

os.environ.pop("PARSELAB_SEED", None)

CRITERIA = {
    1: "MST oracle equivalence",
    2: "Projective oracle equivalence",
    3: "Transition completeness",
    4: "Dynamic-oracle correctness",
    5: "Non-projectivity degree",
    6: "Neural gradient checks",
    7: "Biaffine definitional unit",
    8: "Overfit sanity (four parsers)",
    9: "Metric correctness",
    10: "DCST mechanics",
    11: "Order-sensitivity probe",
    12: "Determinism",
}

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        prev = _results.get(n, "PASS")
        ok = rep.outcome == "passed"
        _results[n] = "PASS" if ok and prev == "PASS" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        status = _results.get(n, "NOT RUN")
        terminalreporter.write_line(f"criterion {n:2d} {title:<32} {status}")
