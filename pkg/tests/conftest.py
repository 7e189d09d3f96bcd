from pathlib import Path

import numpy as np
import pytest

from styleproj import FeatureMap

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def fmap(*channels) -> FeatureMap:
    """Build a 1-row FeatureMap from per-channel value lists."""
    return FeatureMap(np.array(channels, dtype=float)[:, None, :])


def random_map(rng, c, h, w) -> FeatureMap:
    return FeatureMap(rng.standard_normal((c, h, w)))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
