import numpy as np
import pytest
from PIL import Image

from loopclose import GrayImage


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_png(path, array_u8):
    """Write an (h, w) or (h, w, 3) uint8 array as a PNG file."""
    arr = np.asarray(array_u8, dtype=np.uint8)
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(path)
    return path


def texture_image(seed, size=96):
    """Procedural texture: band-limited noise plus a few bright rectangles."""
    gen = np.random.default_rng(seed)
    noise = gen.random((size // 4, size // 4))
    big = np.kron(noise, np.ones((4, 4)))
    for _ in range(4):
        y, x = gen.integers(0, size - 12, size=2)
        h, w = gen.integers(4, 12, size=2)
        big[y : y + h, x : x + w] = gen.random()
    big = 0.15 + 0.7 * (big - big.min()) / (big.max() - big.min() + 1e-12)
    return GrayImage(big)
