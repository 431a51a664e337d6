import os

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_world():
    from realmotion.world import WorldConfig

    return WorldConfig(seed=5)


@pytest.fixture(scope="session")
def scenes(small_world):
    from realmotion.world import generate_scene

    return [generate_scene(small_world, i) for i in range(12)]


@pytest.fixture(scope="session")
def tiny_dataset(scenes):
    from realmotion.data import build_dataset

    return build_dataset(scenes[:8], (30, 40, 50), horizon=20)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
