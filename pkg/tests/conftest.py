import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fembem.adapt import mark_corner
from fembem.mesh import extend_hierarchy, hierarchy_from_volume, lshape_mesh

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def corner_hierarchy(levels: int):
    h = hierarchy_from_volume(lshape_mesh())
    for _ in range(levels):
        h = extend_hierarchy(h, *mark_corner(*h.finest))
    return h


def mixed_hierarchy(levels: int, seed: int = 0):
    """Random volume and boundary marks; exercises non-trivial increments."""
    rng = np.random.default_rng(seed)
    h = hierarchy_from_volume(lshape_mesh())
    for _ in range(levels):
        vol, bnd = h.finest
        mv = rng.choice(vol.n_triangles, size=max(1, vol.n_triangles // 4), replace=False)
        mb = rng.choice(bnd.n_segments, size=1)
        h = extend_hierarchy(h, mv, mb)
    return h


@pytest.fixture(scope="session")
def lshape():
    return lshape_mesh()


@pytest.fixture(scope="session")
def corner3():
    return corner_hierarchy(3)


@pytest.fixture(scope="session")
def mixed3():
    return mixed_hierarchy(3)
