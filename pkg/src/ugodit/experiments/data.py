"""Desk-scale datasets: procedural phantoms and directory ingestion."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..errors import ConfigurationError, DataError
from ..seeding import derive_seed

Tensor = torch.Tensor

_RASTER_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


@dataclass(frozen=True)
class PhantomSpec:
    """Which procedural family to draw from, how busy, and the data seed."""

    family: str  # "ellipses" or "texture"
    complexity: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("ellipses", "texture"):
            raise ConfigurationError(f"unknown phantom family {self.family!r}")
        if self.complexity < 1:
            raise ConfigurationError(f"complexity must be >= 1, got {self.complexity}")


def _ellipse_phantom(rng: np.random.Generator, size: int, complexity: int) -> np.ndarray:
    yy, xx = np.meshgrid(
        np.linspace(-1, 1, size), np.linspace(-1, 1, size), indexing="ij"
    )
    img = np.zeros((size, size))
    # body ellipse plus a few random internal structures
    count = 1 + complexity + int(rng.integers(0, complexity + 1))
    for idx in range(count):
        if idx == 0:
            cy, cx, a, b = 0.0, 0.0, 0.85, 0.7
            theta = 0.0
            amp = 0.55
        else:
            cy, cx = rng.uniform(-0.5, 0.5, size=2)
            a, b = rng.uniform(0.08, 0.45, size=2)
            theta = rng.uniform(0, np.pi)
            amp = rng.uniform(-0.35, 0.5)
        ct, st = np.cos(theta), np.sin(theta)
        u = ((xx - cx) * ct + (yy - cy) * st) / a
        v = (-(xx - cx) * st + (yy - cy) * ct) / b
        rho2 = u**2 + v**2
        cap = np.clip(1.0 - rho2, 0.0, None)
        img += amp * cap
    # noise-floor pedestal: magnitude images never hit exact zero
    img = 0.15 + 0.85 * np.clip(img, 0.0, 1.0)
    return img


def _texture_image(rng: np.random.Generator, size: int, complexity: int) -> np.ndarray:
    band = min(size // 2, 2 + 2 * complexity)
    channels = []
    for _ in range(3):
        coeffs = np.zeros((size, size), dtype=complex)
        block = rng.normal(size=(band, band)) + 1j * rng.normal(size=(band, band))
        # anchor at the low-frequency corner; irfft-style symmetry not needed
        coeffs[:band, :band] = block
        field = np.fft.ifft2(coeffs).real
        channels.append(field)
    img = np.stack(channels)
    lo, hi = img.min(), img.max()
    if hi - lo < 1e-12:
        return np.full((3, size, size), 0.5)
    return (img - lo) / (hi - lo)


def synthesize_dataset(spec: PhantomSpec, count: int, size: int) -> list[Tensor]:
    """Generate ``count`` phantoms of ``size`` x ``size`` pixels.

    Ellipses come out as 2-channel images (zero imaginary part) for the
    MRI pipeline; textures as 3-channel natural-image stand-ins. All
    values lie in [0, 1] and the output is a pure function of
    (spec, count, size).
    """
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    if size < 8:
        raise ConfigurationError(f"size must be >= 8, got {size}")
    images = []
    for idx in range(count):
        rng = np.random.default_rng(derive_seed(spec.seed, spec.family, idx))
        if spec.family == "ellipses":
            plane = _ellipse_phantom(rng, size, spec.complexity)
            arr = np.stack([plane, np.zeros_like(plane)])
        else:
            arr = _texture_image(rng, size, spec.complexity)
        images.append(torch.from_numpy(arr.astype(np.float32)))
    return images


def ingest_directory(path, image_size: int, count: int) -> list[Tensor]:
    """Load ``count`` raster images: center-crop, resize, scale to [0, 1].

    Files are taken in lexicographic order so repeated ingestion of the
    same directory yields identical tensors.
    """
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"no readable directory at {root}")
    files = sorted(
        p for p in root.iterdir() if p.suffix.lower() in _RASTER_SUFFIXES and p.is_file()
    )
    if len(files) < count:
        raise DataError(
            f"directory {root} holds {len(files)} raster images, need {count}"
        )
    images = []
    for file in files[:count]:
        with Image.open(file) as im:
            im = im.convert("RGB")
            side = min(im.size)
            left = (im.width - side) // 2
            top = (im.height - side) // 2
            im = im.crop((left, top, left + side, top + side))
            im = im.resize((image_size, image_size), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float32) / 255.0
        images.append(torch.from_numpy(arr.transpose(2, 0, 1)))
    return images
