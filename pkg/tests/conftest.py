import pytest

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        prev = _ACCEPTANCE.get(n)
        if prev is None or prev[0] == "PASS" or status == "FAIL":
            _ACCEPTANCE[n] = (status, item.name)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, name = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {status}  ({name})")
