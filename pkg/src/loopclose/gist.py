"""Global scene descriptor from oriented band-pass filter responses.

The image is resized to a square canonical size, prewhitened with a local
contrast normalization, filtered in the frequency domain by a bank of
oriented Gaussian band-pass (Gabor-type) transfer functions, and each
response magnitude is averaged over a coarse spatial grid. Filters are
built once per parameter set and shared across images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoders import Descriptor, normalized
from .errors import InvalidParamsError
from .imaging import GrayImage, resize_bilinear

_PREFILTER_CYCLES = 4.0  # low-pass cutoff of the whitening stage, cycles/image
_CONTRAST_OFFSET = 0.2


@dataclass(frozen=True)
class GistParams:
    """Bank geometry: descriptor length is scales * orientations * grid^2."""

    scales: int = 4
    orientations_per_scale: int = 8
    grid: int = 4
    canonical_size: int = 256

    def __post_init__(self):
        for name in ("scales", "orientations_per_scale", "grid", "canonical_size"):
            if getattr(self, name) < 1:
                raise InvalidParamsError(f"{name} must be >= 1")

    @property
    def descriptor_dim(self) -> int:
        return self.scales * self.orientations_per_scale * self.grid**2


@dataclass(frozen=True)
class GaborBank:
    """Frequency-domain transfer functions, one per (scale, orientation).

    Filters are laid out scale-major and indexed in unshifted FFT
    coordinates (DC at [0, 0]); every filter has exactly zero DC response.
    """

    filters: np.ndarray  # (scales * orientations, size, size)
    scales: int
    orientations_per_scale: int
    canonical_size: int

    def __post_init__(self):
        f = np.ascontiguousarray(self.filters, dtype=np.float64)
        n = self.canonical_size
        if f.shape != (self.scales * self.orientations_per_scale, n, n):
            raise InvalidParamsError(
                f"filter stack shape {f.shape} does not match "
                f"{self.scales}x{self.orientations_per_scale} filters of size {n}"
            )
        if np.abs(f[:, 0, 0]).max() > 1e-9:
            raise InvalidParamsError("filters must have zero DC response")
        f.flags.writeable = False
        object.__setattr__(self, "filters", f)


def build_gabor_bank(params: GistParams) -> GaborBank:
    """Construct the oriented band-pass bank for ``params``.

    Within one scale all orientations share a radial profile peaked at
    ``0.3 / 1.85^scale`` cycles per pixel and differ only by rotation of
    the angular term. The DC bin is forced to exactly zero so constant
    images produce exactly-zero responses.
    """
    n = params.canonical_size
    n_ori = params.orientations_per_scale
    coords = np.arange(-(n // 2), n - n // 2, dtype=np.float64)
    fx, fy = np.meshgrid(coords, coords)
    radius = np.fft.ifftshift(np.hypot(fx, fy))
    angle = np.fft.ifftshift(np.arctan2(fy, fx))

    angular_tightness = 16.0 * n_ori**2 / 32.0**2
    filters = np.empty((params.scales * n_ori, n, n))
    i = 0
    for s in range(params.scales):
        peak_freq = 0.3 / 1.85**s
        radial = -10.0 * 0.35 * (radius / n / peak_freq - 1.0) ** 2
        for o in range(n_ori):
            rotated = angle + np.pi * o / n_ori
            rotated = np.mod(rotated + np.pi, 2.0 * np.pi) - np.pi
            filters[i] = np.exp(radial - 2.0 * angular_tightness * np.pi * rotated**2)
            filters[i, 0, 0] = 0.0
            i += 1
    return GaborBank(
        filters=filters,
        scales=params.scales,
        orientations_per_scale=n_ori,
        canonical_size=n,
    )


def _prewhiten(pixels01: np.ndarray) -> np.ndarray:
    """Log-luminance whitening followed by local contrast normalization."""
    pad = 5
    im = np.log1p(pixels01 * 255.0)
    im = np.pad(im, pad, mode="symmetric")
    extra = im.shape[0] % 2  # keep the spectrum grid even
    if extra:
        im = np.pad(im, ((0, 1), (0, 1)), mode="symmetric")
    n = im.shape[0]

    sigma_sq = (_PREFILTER_CYCLES / np.sqrt(np.log(2.0))) ** 2
    coords = np.arange(-(n // 2), n - n // 2, dtype=np.float64)
    fx, fy = np.meshgrid(coords, coords)
    lowpass = np.fft.ifftshift(np.exp(-(fx**2 + fy**2) / sigma_sq))

    im = im - np.real(np.fft.ifft2(np.fft.fft2(im) * lowpass))
    local_std = np.sqrt(np.abs(np.fft.ifft2(np.fft.fft2(im**2) * lowpass)))
    im = im / (_CONTRAST_OFFSET + local_std)
    size = pixels01.shape[0]
    return im[pad : pad + size, pad : pad + size]


def _block_means(mag: np.ndarray, grid: int) -> np.ndarray:
    n = mag.shape[0]
    if n % grid == 0:
        b = n // grid
        return mag.reshape(grid, b, grid, b).mean(axis=(1, 3))
    edges = np.linspace(0, n, grid + 1).astype(int)
    out = np.empty((grid, grid))
    for i in range(grid):
        for j in range(grid):
            out[i, j] = mag[edges[i] : edges[i + 1], edges[j] : edges[j + 1]].mean()
    return out


def compute_gist(
    img: GrayImage,
    bank: GaborBank,
    params: GistParams,
    image_id: str = "",
    normalize: bool = True,
) -> Descriptor:
    """Whole-image descriptor from spatially pooled filter responses.

    The image is resized to the canonical square, prewhitened, filtered by
    every bank filter via the image spectrum, and each magnitude response
    is averaged over a ``grid x grid`` partition. Blocks are concatenated
    filter-major (rows first within a filter) and unit-normalized unless
    ``normalize`` is False.
    """
    if (
        bank.canonical_size != params.canonical_size
        or bank.scales != params.scales
        or bank.orientations_per_scale != params.orientations_per_scale
    ):
        raise InvalidParamsError("filter bank was built for different parameters")
    n = params.canonical_size
    resized = resize_bilinear(img, n, n)
    white = _prewhiten(resized.pixels)
    spectrum = np.fft.fft2(white)

    grid = params.grid
    out = np.empty(bank.filters.shape[0] * grid * grid)
    for i, filt in enumerate(bank.filters):
        mag = np.abs(np.fft.ifft2(spectrum * filt))
        out[i * grid * grid : (i + 1) * grid * grid] = _block_means(mag, grid).reshape(-1)
    if normalize:
        out = normalized(out)
    return Descriptor(out, source="gist", image_id=image_id)
