import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def sphere1():
    from diracshell.surface import SurfaceSpec, build_mesh

    return build_mesh(SurfaceSpec("sphere"), 1)


@pytest.fixture(scope="session")
def coin1():
    from diracshell.surface import SurfaceSpec, build_mesh

    return build_mesh(SurfaceSpec("coin", a=1.0, h=0.3, delta=0.2), 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
