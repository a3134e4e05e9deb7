import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion this test checks")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    n, title = mark.args
    ok = rep.passed and not hasattr(rep, "wasxfail")
    detail = ""
    if not ok:
        detail = getattr(rep, "wasxfail", "") or str(rep.longrepr).strip().splitlines()[-1]
    _criteria.setdefault(n, []).append((title, ok, item.name, detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        parts = _criteria[n]
        ok = all(p[1] for p in parts)
        line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {parts[0][0]}"
        for title, good, name, detail in parts:
            if not good:
                line += f" | {name}: {detail}"
        terminalreporter.write_line(line)
