import numpy as np
import pytest

from harvestplan.env import EnvConfig
from harvestplan.layouts import LayoutSpec, generate
from harvestplan.types import FruitLayout
from harvestplan.workspace import WorkspaceConfig


@pytest.fixture
def ws():
    return WorkspaceConfig()


@pytest.fixture
def cfg():
    return EnvConfig()


@pytest.fixture
def small_layout(ws):
    return generate(LayoutSpec(4, seed=3), ws)


def make_layout(points, required=None, id="t"):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    required = required or (1,) * len(points)
    return FruitLayout(points, tuple(required), id)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
