import numpy as np
import pytest
from hypothesis import settings

from mogflow.convex import ellipsoid_support, make_support_body
from mogflow.sphere import build_grid

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def circle256():
    return build_grid(1, 256)


@pytest.fixture(scope="session")
def circle512():
    return build_grid(1, 512)


@pytest.fixture(scope="session")
def sphere32():
    return build_grid(2, (32, 64))


@pytest.fixture(scope="session")
def ellipse512(circle512):
    return make_support_body(ellipsoid_support(circle512, [2.0, 1.0]))


def ellipse_support_exact(theta, a, b):
    return np.sqrt((a * np.cos(theta)) ** 2 + (b * np.sin(theta)) ** 2)
