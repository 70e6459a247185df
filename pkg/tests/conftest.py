import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, os.path.dirname(__file__))

from funcito.paths import LiftedPath  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@st.composite
def lifted_paths(draw, min_points=2, max_points=12, jumps=True, horizon=None):
    """Small random lifted paths (d = 1), optionally with declared jumps."""
    n = draw(st.integers(min_points, max_points))
    steps = draw(st.lists(st.floats(0.01, 1.0), min_size=n - 1, max_size=n - 1))
    times = np.concatenate([[0.0], np.cumsum(steps)])
    if horizon is not None:
        times = times * (horizon / times[-1]) if times[-1] > 0 else times
    x = np.array(draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n)))
    v = np.array(draw(st.lists(st.floats(0.0, 3.0), min_size=n, max_size=n)))
    idx, left = [], []
    if jumps and n > 1:
        for i in sorted(draw(st.sets(st.integers(1, n - 1), max_size=3))):
            idx.append(i)
            left.append(x[i] - draw(st.floats(0.1, 2.0)))
    return LiftedPath.from_arrays(times, x, v, idx, left if idx else None)


@pytest.fixture
def bm_batch():
    from funcito.simulation import SimulationConfig, simulate

    return simulate(SimulationConfig(steps=64, path_count=20, seed=11))
