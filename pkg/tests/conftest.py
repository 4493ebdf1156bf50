"""Shared fixtures: rendered scenes and a trained regularizer.

Scene rendering and stagewise training dominate suite runtime, so both are
session-scoped and reused by every module that needs them.
"""

import pytest

from binsweep import AllocationCounter, SearchConfig, make_scene, train_stagewise


@pytest.fixture(scope="session")
def config():
    return SearchConfig()


@pytest.fixture(scope="session")
def plane_scene():
    return make_scene("plane", seed=0)


@pytest.fixture(scope="session")
def slant_scene():
    return make_scene("slant", seed=0)


@pytest.fixture(scope="session")
def sphere_scene():
    return make_scene("sphere", seed=0)


@pytest.fixture(scope="session")
def trained(config):
    """Parameters fitted on four textured planes, with the records and the
    allocation counter observed while fitting them."""
    scenes = [make_scene("plane", seed=s) for s in (2, 3, 4, 5)]
    counter = AllocationCounter()
    params, records = train_stagewise(scenes, config, epochs=10, counter=counter)
    return params, records, counter
