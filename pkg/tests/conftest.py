import numpy as np
import pytest

from scapegoat import backend
from scapegoat.world import WorldConfig, build_world


@pytest.fixture(scope="session")
def world():
    """Default-sized toy world, shared by optimizer and acceptance tests."""
    return build_world(WorldConfig(seed=0))


@pytest.fixture(scope="session")
def small_world():
    """A 16-dim latent world that builds in a fraction of a second."""
    cfg = WorldConfig(layers=2, channels=8, image_dim=48, id_dim=4,
                      probe_size=64, seed=3)
    return build_world(cfg)


@pytest.fixture
def restore_backend():
    """Put the import-time backend back after a test that calls use()."""
    name = backend.active()
    yield
    backend.use(name)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
