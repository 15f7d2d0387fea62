import numpy as np
import pytest

ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def criterion(request):
    """Record one acceptance line; printed together at the end of the run."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number, name, ok, detail):
        lines.append((number, f"criterion {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
