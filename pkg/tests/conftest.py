import numpy as np
import pytest

from volterra_rff.lora import LoraParams, synthesize_preamble

_acceptance_rows = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker.args
        detail = dict(item.user_properties).get("detail", "")
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        if report.outcome == "skipped" and not detail:
            detail = str(report.longrepr[2]) if isinstance(report.longrepr, tuple) else ""
        _acceptance_rows.append((number, status, title, detail))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, title, detail in sorted(_acceptance_rows, key=lambda r: r[0]):
        line = f"[{status}] {number:>2}. {title}"
        terminalreporter.write_line(f"{line}: {detail}" if detail else line)


@pytest.fixture(scope="session")
def preamble():
    return synthesize_preamble(LoraParams())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
