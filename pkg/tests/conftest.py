import numpy as np
import pytest

from core.geometry import Box, EntropyGeometry, EuclideanGeometry, Simplex, unit_ball
from core.problems import affine, norm_distance


@pytest.fixture
def euclid():
    return EuclideanGeometry()


@pytest.fixture
def entropy():
    return EntropyGeometry()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def interval():
    return Box([-1.0], [1.0])


@pytest.fixture
def abs_problem():
    """f(x) = |x|, g(x) = x - 0.5 on [-1, 1]; optimum f* = 0 at x* = 0."""
    return norm_distance([0.0]), affine([1.0], 0.5)


def random_simplex_point(rng, n, floor=0.1):
    """Interior simplex point with every coordinate at least floor / n."""
    w = rng.dirichlet(np.ones(n))
    return (1.0 - floor) * w + floor / n


def random_ball_point(rng, n, radius=1.0):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v) * radius * rng.uniform() ** (1.0 / n)


@pytest.fixture
def ball2():
    return unit_ball(2)


@pytest.fixture
def simplex3():
    return Simplex(3)
