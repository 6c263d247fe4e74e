import pytest

_RESULTS_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record ``(number, passed, detail)`` for the acceptance summary and print it."""
    results = request.config.stash.setdefault(_RESULTS_KEY, [])

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        results.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS_KEY, [])
    if results:
        terminalreporter.section("acceptance criteria")
        for line in sorted(results):
            terminalreporter.write_line(line)
