"""Acceptance reporting: one PASS/FAIL line per criterion in the terminal summary."""
import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(code, title): acceptance criterion covered by a test")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    code, title = mark.args
    failed = call.excinfo is not None
    prev = _CRITERIA.get(code, (title, True, 0.0))
    _CRITERIA[code] = (title, prev[1] and not failed, prev[2] + call.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for code in sorted(_CRITERIA, key=lambda c: int(c[1:])):
        title, ok, secs = _CRITERIA[code]
        terminalreporter.write_line(f"{code} {'PASS' if ok else 'FAIL'}  {title}  ({secs:.2f} s)")


@pytest.fixture
def stopwatch():
    import time

    class _Watch:
        def __init__(self):
            self.start = time.perf_counter()

        @property
        def elapsed(self):
            return time.perf_counter() - self.start

    return _Watch()
