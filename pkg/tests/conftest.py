import re

import pytest

_RESULTS = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion; the number comes from the test name."""
    n = int(re.search(r"criterion_(\d+)", request.node.name).group(1))
    details = []
    passed = [True]

    def check(ok, detail=""):
        details.append(detail)
        passed[0] = passed[0] and bool(ok)
        _RESULTS[n] = (passed[0], "; ".join(details))
        assert ok, detail

    _RESULTS[n] = (False, "did not finish")
    yield check
    if _RESULTS[n] == (False, "did not finish"):
        _RESULTS[n] = (False, "no check recorded")


def pytest_runtest_makereport(item, call):
    # an exception before the last check still counts as a failure
    if call.when == "call" and call.excinfo is not None and "criterion" in item.fixturenames:
        n = int(re.search(r"criterion_(\d+)", item.name).group(1))
        prior = _RESULTS.get(n, (False, ""))[1]
        if prior == "did not finish":
            prior = ""
        _RESULTS[n] = (False, prior or f"raised {call.excinfo.typename}")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok, detail = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
