import numpy as np
import pytest

from deepnarrow.core import ComplexAffineMap, Cvnn


def random_affine(rng, out_dim, in_dim, scale=1.0):
    m = scale * (rng.standard_normal((out_dim, in_dim))
                 + 1j * rng.standard_normal((out_dim, in_dim)))
    b = scale * (rng.standard_normal(out_dim) + 1j * rng.standard_normal(out_dim))
    return ComplexAffineMap(m, b)


def random_shallow(rng, n, m, width, activation_id, scale=1.0):
    return Cvnn((random_affine(rng, width, n, scale),
                 random_affine(rng, m, width, scale)), activation_id)


def random_points(rng, count, n, scale=1.0):
    return scale * (rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
