"""Shared fixtures: small float64 parameter sets and seeded generators."""

import numpy as np
import pytest

from crosstill.rng import stream


@pytest.fixture
def rng():
    return stream(1234, "tests")


def random_f64(rng, *shape):
    return rng.standard_normal(shape).astype(np.float64)
