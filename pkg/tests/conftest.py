"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line per criterion."""

import pytest

CRITERIA = {
    1: "grid cardinality 35,574",
    2: "speedup 35,574 / 2,500",
    3: "SA median within 5% of brute force",
    4: "forest and gbt RMSE <= linear RMSE",
    5: "SHAP local accuracy and oracle agreement",
    6: "handover engine unit suite",
    7: "KPI formula suite",
    8: "determinism",
    9: "non-convexity surface and local maxima",
    10: "A3/A5 coupling",
}

_outcomes: dict[int, bool] = {}
_details: dict[int, list[str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or rep.failed:
        _outcomes[n] = _outcomes.get(n, True) and rep.passed
    if rep.when == "call":
        _details.setdefault(n, []).extend(str(v) for k, v in rep.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_outcomes):
        status = "PASS" if _outcomes[n] else "FAIL"
        tr.write_line(f"CRITERION {n:>2} {status}: {CRITERIA.get(n, '')}")
        for d in _details.get(n, []):
            tr.write_line(f"    {d}")
