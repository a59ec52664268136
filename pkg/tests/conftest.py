"""Aggregate acceptance tests into one PASS/FAIL line per criterion."""

import collections

_OUTCOMES = collections.OrderedDict()
_TITLES = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            n = mark.args[0]
            _TITLES[n] = mark.args[1] if len(mark.args) > 1 else ""
            item.user_properties.append(("criterion", n))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when != "call" and report.passed:
        return
    if hasattr(report, "wasxfail"):
        outcome = "xfail" if report.skipped else "xpass"
    else:
        outcome = report.outcome
    _OUTCOMES.setdefault(props["criterion"], []).append((report.nodeid.split("::")[-1], outcome))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        results = _OUTCOMES[n]
        bad = [name for name, o in results if o in ("failed", "xfail", "xpass")]
        status = "PASS" if not bad else "FAIL"
        line = f"{status} criterion {n:>2} {_TITLES.get(n, '')}: {len(results) - len(bad)}/{len(results)} checks"
        known = [name for name, o in results if o == "xfail"]
        if known:
            line += f" (known, ledgered: {', '.join(known)})"
        tr.write_line(line)
