import sys
import numpy as np
import pytest

from relaydof.eqspace import CoeffVec, MessageId


def cvec(row, rnd=1, dest=1):
    """CoeffVec over MessageId(rnd, dest, 1..len(row))."""
    return CoeffVec({MessageId(rnd, dest, s): complex(v) for s, v in enumerate(row, 1)})


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
