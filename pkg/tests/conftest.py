"""Shared fixtures: small phantom image sets and a trained edge detector.

Session-scoped because detector training is the most expensive shared
setup; every test that needs a usable detector reuses the same one.
"""

import numpy as np
import pytest

from groupreg.edge import train_edge_detector
from groupreg.phantom import Breathing, PhantomSpec, generate
from groupreg.pipeline import preprocess


def small_series(anatomy_seed, frames=3, size=64, snr_db=None, depth=3.0):
    return generate(PhantomSpec(size=size, frames=frames,
                                breathing=Breathing(depth_px=depth),
                                anatomy_seed=anatomy_seed, noise_snr_db=snr_db))


@pytest.fixture(scope="session")
def phantom_images_64():
    images = []
    for anatomy_seed in (0, 1):
        series = small_series(anatomy_seed)
        images.extend(preprocess(f)[0] for f in series.clean_frames)
    return images


@pytest.fixture(scope="session")
def trained_detector(phantom_images_64):
    return train_edge_detector(phantom_images_64, seed=0)
