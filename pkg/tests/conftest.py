import numpy as np
import pytest

from pond.instance import synthetic_instance


@pytest.fixture(scope="session")
def synthetic_inst():
    return synthetic_instance()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_RESULTS_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the test still asserts on its own."""
    lines = request.config.stash[_RESULTS_KEY]

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} :: {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_RESULTS_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda p: p[0]):
        terminalreporter.write_line(line)
