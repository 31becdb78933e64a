import pytest

_results: dict[int, tuple[str, str]] = {}
_notes: list[str] = []


@pytest.fixture
def note():
    """Append a line to the acceptance summary printed at the end of the run."""
    return _notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if report.failed:
        _results[n] = (title, "FAIL")
    elif report.when == "call" and n not in _results:
        _results[n] = (title, "PASS")
    elif report.skipped and n not in _results:
        _results[n] = (title, "SKIP")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_results):
        title, status = _results[n]
        tr.write_line(f"criterion {n:2d}  {status}  {title}")
    for line in _notes:
        tr.write_line(line)
