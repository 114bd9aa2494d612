import numpy as np
import pytest

from regionstyle import Image, identity_model, toy_model
from regionstyle.segmenter import warmup


def random_image(rng, h, w):
    return Image(rng.random((h, w, 3)).astype(np.float32))


def blocky_image(rng, h, w, blocks_y, blocks_x, min_separation=0.25):
    """Piecewise-constant image whose block colors are pairwise far apart.

    Region growing is exact on such images: a grown region is precisely
    the constant connected component under its seed.
    """
    while True:
        palette = rng.random((blocks_y * blocks_x, 3)).astype(np.float32)
        diffs = palette[:, None, :] - palette[None, :, :]
        dist = np.sqrt((diffs**2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() > min_separation:
            break
    grid = palette.reshape(blocks_y, blocks_x, 3)
    data = np.repeat(np.repeat(grid, -(-h // blocks_y), 0), -(-w // blocks_x), 1)
    return Image(np.ascontiguousarray(data[:h, :w]))


@pytest.fixture(scope="session")
def toy():
    return toy_model(0)


@pytest.fixture(scope="session")
def identity():
    return identity_model()


@pytest.fixture(scope="session")
def warm_segmenter():
    """Pay the JIT compilation cost once, outside any timed test."""
    warmup()
