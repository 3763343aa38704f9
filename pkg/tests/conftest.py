import contextlib

import pytest

_RESULTS = {}


@pytest.fixture
def criterion():
    """Context manager that records one PASS/FAIL line per acceptance criterion."""

    @contextlib.contextmanager
    def record(number, title):
        try:
            yield
        except BaseException:
            _RESULTS[number] = ("FAIL", title)
            print(f"FAIL criterion {number:2d}: {title}")
            raise
        _RESULTS[number] = ("PASS", title)
        print(f"PASS criterion {number:2d}: {title}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title = _RESULTS[number]
        terminalreporter.write_line(f"{status} criterion {number:2d}: {title}")
