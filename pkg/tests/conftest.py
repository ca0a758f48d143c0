import numpy as np
import pytest
from scipy import ndimage

from porebio.image_io import synth_volume
from porebio.kinetics import BioParams
from porebio.network import extract_network

# DOM diffusivity used throughout the tests: ~0.5 cm^2/day, the order of
# small dissolved organic molecules in water
D_N = 5e7

# four crossing channels and a chamber; about 300 balls in one component
NETWORK_SHAPES = [
    {"kind": "tube", "start": [4, 4, 4], "end": [35, 30, 20], "radius": 2.6},
    {"kind": "tube", "start": [4, 30, 10], "end": [35, 6, 30], "radius": 2.2},
    {"kind": "tube", "start": [20, 2, 36], "end": [20, 37, 4], "radius": 2.0},
    {"kind": "sphere", "center": [20, 18, 18], "radius": 5},
]


def channel_volume():
    return synth_volume({"dims": [40, 40, 40], "resolution": 24.0, "shapes": NETWORK_SHAPES})


def tube_volume():
    """Two disjoint straight tubes of radius 2."""
    return synth_volume({"dims": [24, 16, 16], "resolution": 10.0, "shapes": [
        {"kind": "tube", "start": [3, 4, 4], "end": [20, 4, 4], "radius": 2},
        {"kind": "tube", "start": [3, 11, 11], "end": [20, 11, 11], "radius": 2}]})


def dumbbell_volume():
    """Two chambers joined by a thin throat."""
    return synth_volume({"dims": [40, 20, 20], "resolution": 24.0, "shapes": [
        {"kind": "sphere", "center": [9, 10, 10], "radius": 6},
        {"kind": "sphere", "center": [30, 10, 10], "radius": 6},
        {"kind": "tube", "start": [9, 10, 10], "end": [30, 10, 10], "radius": 2.5}]})


def flood_fill_components(img):
    """Face-connected pore components."""
    return ndimage.label(img.voxels)[1]


@pytest.fixture
def params():
    return BioParams(D_n=D_N)


@pytest.fixture(scope="session")
def channel_net():
    return extract_network(channel_volume())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
