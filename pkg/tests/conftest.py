import numpy as np
import pytest

from dualmoire.imgcore import Image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, channels=3, h=16, w=16):
    return Image(rng.random((channels, h, w)))


def constant_image(value, channels=3, h=8, w=8):
    return Image(np.full((channels, h, w), float(value)))
