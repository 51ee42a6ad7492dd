from collections import defaultdict

import pytest

_RESULTS = defaultdict(list)
_TITLES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    _TITLES[n] = title
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if hasattr(rep, "wasxfail"):
            state = "xfail" if rep.skipped else "xpass"
        else:
            state = rep.outcome
        _RESULTS[n].append((item.name, state))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS):
        parts = _RESULTS[n]
        ok = all(s == "passed" for _, s in parts)
        known = [name for name, s in parts if s == "xfail"]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {_TITLES[n]}"
        bad = [f"{name}={s}" for name, s in parts if s != "passed"]
        if bad:
            line += f" [{', '.join(bad)}]"
        if known and len(known) == len(bad):
            line += " (known, see ledger)"
        tr.write_line(line)
