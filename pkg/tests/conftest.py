import numpy as np
import pytest

#: One "[ACCEPTANCE] name: PASS/FAIL" line per acceptance criterion,
#: echoed in the terminal summary so the gate can be read off any run.
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance gate")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_mask(rng, h=16, w=16, p=0.4):
    """Random binary mask guaranteed to have >= 1 foreground pixel."""
    m = rng.random((h, w)) < p
    if not m.any():
        m[rng.integers(h), rng.integers(w)] = True
    return m
