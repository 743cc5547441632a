"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""
from __future__ import annotations

from collections import defaultdict

import pytest

_OUTCOMES: dict = defaultdict(list)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        details = [v for k, v in item.user_properties if k == "detail"]
        _OUTCOMES[mark.args[0]].append((item.name, rep.outcome, details))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_OUTCOMES):
        runs = _OUTCOMES[num]
        ok = all(o == "passed" for _, o, _ in runs)
        tr.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}")
        for name, o, details in runs:
            extra = f" [{'; '.join(details)}]" if details else ""
            tr.write_line(f"    {o:7s} {name}{extra}")
