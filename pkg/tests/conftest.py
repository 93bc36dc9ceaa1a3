import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    crit = item.get_closest_marker("criterion")
    if crit is not None and rep.when == "call":
        rep.user_properties.append(("criterion", crit.args[0]))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion covered by the test")


def pytest_terminal_summary(terminalreporter):
    rows = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            props = dict(rep.user_properties)
            if rep.when == "call" and "criterion" in props:
                rows.append((props["criterion"], "PASS" if key == "passed" else "FAIL"))
    if rows:
        terminalreporter.section("acceptance criteria")
        for label, verdict in sorted(rows):
            terminalreporter.write_line(f"{verdict}  {label}")
