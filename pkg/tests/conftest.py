"""Collects acceptance-criterion outcomes and prints one line per criterion."""

from collections import defaultdict

_outcomes = defaultdict(list)  # criterion number -> [(nodeid, outcome)]
_titles = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test checks")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            item.user_properties.append(("criterion", m.args[0]))
            _titles[m.args[0]] = m.args[1]


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes[crit].append((report.nodeid, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_outcomes):
        results = _outcomes[crit]
        failed = [n.split("::")[-1] for n, o in results if o == "failed"]
        if failed:
            status = "FAIL"
        elif all(o == "skipped" for _, o in results):
            status = "SKIP"
        else:
            status = "PASS"
        line = f"criterion {crit:>2} {status}  {_titles[crit]} ({len(results)} checks)"
        if failed:
            line += f"  failing: {', '.join(failed)}"
        tr.write_line(line)
