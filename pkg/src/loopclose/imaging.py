"""Image loading, grayscale conversion, and bilinear resizing."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import _kernels
from .errors import DecodeError, InvalidSizeError


@dataclass(frozen=True)
class GrayImage:
    """Immutable grayscale raster, luminance in [0, 1], row-major."""

    pixels: np.ndarray  # shape (height, width), float64

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidSizeError(f"expected a non-empty 2-D raster, got shape {px.shape}")
        if not np.isfinite(px).all():
            raise InvalidSizeError("pixel values must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise InvalidSizeError("pixel values must lie in [0, 1]")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """Rec.601 luminance of an (h, w, 3) array of 0..255 channel values.

    Written as green plus weighted channel differences so equal-channel
    (already gray) inputs come back bit-exact.
    """
    r = rgb[..., 0].astype(np.float64)
    g = rgb[..., 1].astype(np.float64)
    b = rgb[..., 2].astype(np.float64)
    return (g + 0.299 * (r - g) + 0.114 * (b - g)) / 255.0


def load_grayscale(path: str | Path) -> GrayImage:
    """Decode a PNG/JPEG file into a normalized grayscale image.

    Color inputs are reduced with Rec.601 weights (0.299 R + 0.587 G +
    0.114 B) and scaled by 1/255. Missing files raise OSError; corrupt or
    unsupported files raise DecodeError.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            else:
                if im.mode != "RGB":
                    im = im.convert("RGB")
                arr = rgb_to_gray(np.asarray(im))
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    return GrayImage(arr)


def resize_bilinear(img: GrayImage, out_w: int, out_h: int) -> GrayImage:
    """Resample to (out_w, out_h) with half-pixel-center bilinear weights.

    Identity resizes are bit-exact; outputs stay inside the source value
    range (convex interpolation, edges clamped).
    """
    if out_w < 1 or out_h < 1:
        raise InvalidSizeError(f"output size must be positive, got {out_w}x{out_h}")
    out = _kernels.resize_bilinear(img.pixels, out_h, out_w)
    # Guard against sub-ulp overshoot from floating-point weight rounding.
    np.clip(out, 0.0, 1.0, out=out)
    return GrayImage(out)
