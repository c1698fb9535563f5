import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import GOLDEN_SCENARIOS  # noqa: E402

from ddpricing import ConsumerType, MarketConfig, Population, SupplyModel  # noqa: E402


@pytest.fixture
def golden_model():
    return SupplyModel.finite(GOLDEN_SCENARIOS)


@pytest.fixture
def golden_cfg():
    return MarketConfig(2, 1.0)


@pytest.fixture
def golden_pop():
    return Population([(ConsumerType(1, 2.0, 4.0), 0.5), (ConsumerType(2, 2.0, 2.0), 0.5)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
