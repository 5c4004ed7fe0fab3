import pytest

_acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        prev = _acceptance.get(n, True)
        _acceptance[n] = prev and rep.passed


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion this test certifies")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    titles = getattr(terminalreporter.config, "_criterion_titles", {})
    for n in sorted(_acceptance):
        status = "PASS" if _acceptance[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {titles.get(n, '')}")


def pytest_collection_modifyitems(config, items):
    titles = {}
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None and len(m.args) > 1:
            titles[m.args[0]] = m.args[1]
    config._criterion_titles = titles
