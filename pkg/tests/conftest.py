import numpy as np
import pytest
from hypothesis import settings

from d2d_paoi.model import ChannelParams, Layout, LayoutGenSpec, TrafficParams, generate_layout

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def dense_layout(n, seed, side=100.0, d_min=2.0, d_max=30.0):
    """Small square so that links interfere noticeably."""
    return generate_layout(LayoutGenSpec(n, side, d_min, d_max, seed))


def mirror_pair(d=10.0, gap=20.0, side=100.0):
    """Two parallel links, mirror images of each other."""
    x0 = side / 2 - gap / 2
    tx = [(x0, 40.0), (x0 + gap, 40.0)]
    rx = [(x0, 40.0 + d), (x0 + gap, 40.0 + d)]
    return Layout(tx, rx, side)


@pytest.fixture
def ch():
    return ChannelParams()


@pytest.fixture
def tr():
    return TrafficParams()


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, message):
    """Remember one acceptance line; printed at the end of the session."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {message}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=str):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
