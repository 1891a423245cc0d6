import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mecopt.env import SystemConfig, Task, default_config


@pytest.fixture
def base_config() -> SystemConfig:
    """Stock setup with exact base task sizes (no random offsets)."""
    return default_config(rng_seed=0, offset_fraction=0.0)


@pytest.fixture
def tiny_config() -> SystemConfig:
    """Two tasks, two cores, room for exactly one input in the cache."""
    tasks = (Task(8000, 12000, 800.0), Task(8000, 12000, 800.0))
    return SystemConfig(tasks=tasks, cache_capacity=8000, num_cores=2,
                        core_frequency=1.7e8, slot_length=0.04,
                        switched_capacitance=1e-19, cost_weight=1.0,
                        reward_scale=1e-6, discount=0.9)
