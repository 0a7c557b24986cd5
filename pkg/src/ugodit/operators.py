"""Forward models and measurement simulation.

Three degradation operators are provided:

* multi-coil MRI: coil sensitivity weighting, orthonormal 2-D Fourier
  transform, Cartesian column undersampling,
* super resolution: non-overlapping block averaging,
* nonlinear blur: Gaussian blur applied in a gamma-compressed domain.

Images are ``(C, H, W)`` float tensors. Complex MRI images travel as two
real channels ``(real, imag)``; k-space measurements as ``(coils, 2, H, W)``.
All operators are immutable after construction and differentiable with
respect to the image argument.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigurationError, ContractError

Tensor = torch.Tensor


def fft2c(x: Tensor) -> Tensor:
    """Orthonormal centered 2-D FFT over the trailing two dims."""
    x = torch.fft.ifftshift(x, dim=(-2, -1))
    x = torch.fft.fft2(x, norm="ortho")
    return torch.fft.fftshift(x, dim=(-2, -1))


def ifft2c(y: Tensor) -> Tensor:
    """Inverse (and exact adjoint) of :func:`fft2c`."""
    y = torch.fft.ifftshift(y, dim=(-2, -1))
    y = torch.fft.ifft2(y, norm="ortho")
    return torch.fft.fftshift(y, dim=(-2, -1))


def _channels_to_complex(x: Tensor) -> Tensor:
    return torch.complex(x[..., 0, :, :], x[..., 1, :, :])


def _complex_to_channels(x: Tensor, dim: int) -> Tensor:
    return torch.stack((x.real, x.imag), dim=dim)


@dataclass(frozen=True)
class CartesianMask:
    """Column-wise k-space sampling pattern with a fully sampled center band."""

    sampled_columns: Tensor  # bool, shape (W,)
    acceleration_factor: int
    acs_width: int

    @property
    def width(self) -> int:
        return int(self.sampled_columns.shape[0])

    @property
    def num_sampled(self) -> int:
        return int(self.sampled_columns.sum().item())


def make_cartesian_mask(
    width: int, acceleration_factor: int, acs_fraction: float, seed: int
) -> CartesianMask:
    """Build a 1-D Cartesian column mask.

    ``round(width / acceleration_factor)`` columns are sampled in total. A
    center band of ``round(acs_fraction * width)`` columns is always
    sampled; the remaining budget is drawn uniformly without replacement
    from the other columns using ``seed``.
    """
    if acceleration_factor < 1:
        raise ConfigurationError(
            f"acceleration_factor must be >= 1, got {acceleration_factor}"
        )
    if not 0.0 < acs_fraction <= 1.0:
        raise ConfigurationError(f"acs_fraction must lie in (0, 1], got {acs_fraction}")
    budget = round(width / acceleration_factor)
    band = round(acs_fraction * width)
    if band > budget:
        raise ConfigurationError(
            f"ACS band of {band} columns exceeds the sampling budget of {budget}"
        )
    start = width // 2 - band // 2
    columns = np.zeros(width, dtype=bool)
    columns[start : start + band] = True
    remaining = budget - band
    if remaining > 0:
        rng = np.random.default_rng(seed)
        pool = np.flatnonzero(~columns)
        chosen = rng.choice(pool, size=remaining, replace=False)
        columns[chosen] = True
    return CartesianMask(
        sampled_columns=torch.from_numpy(columns),
        acceleration_factor=int(acceleration_factor),
        acs_width=int(band),
    )


@dataclass(frozen=True)
class SensitivityMaps:
    """Per-coil complex spatial weights, normalized to unit energy per pixel.

    Stored as a real ``(coils, 2, H, W)`` tensor; channel 0 is the real
    part, channel 1 the imaginary part.
    """

    maps: Tensor

    @property
    def coils(self) -> int:
        return int(self.maps.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.maps.shape[-2]), int(self.maps.shape[-1])

    def as_complex(self) -> Tensor:
        return _channels_to_complex(self.maps)


def make_sensitivity_maps(
    coils: int, height: int, width: int, seed: int
) -> SensitivityMaps:
    """Synthesize smooth coil sensitivity profiles.

    Each coil gets a Gaussian-bump magnitude centered at an equally spaced
    angular position on a ring around the image center plus a linear phase
    ramp. Ramp slopes are centered across coils so only relative phases
    remain (a single coil is purely real). The stack is normalized so the
    per-pixel coil energy is exactly one.
    """
    if coils < 1:
        raise ConfigurationError(f"coils must be >= 1, got {coils}")
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(
        np.linspace(-1.0, 1.0, height), np.linspace(-1.0, 1.0, width), indexing="ij"
    )
    angle_offset = rng.uniform(0.0, 2.0 * np.pi)
    angles = angle_offset + 2.0 * np.pi * np.arange(coils) / coils
    bump_sigma = 0.9
    ring_radius = 0.55
    ramp = 1.2

    mags = np.empty((coils, height, width))
    for c, theta in enumerate(angles):
        cy, cx = ring_radius * np.sin(theta), ring_radius * np.cos(theta)
        mags[c] = 0.1 + np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * bump_sigma**2))

    slope_y = ramp * np.cos(angles)
    slope_x = ramp * np.sin(angles)
    slope_y -= slope_y.mean()
    slope_x -= slope_x.mean()
    phases = slope_y[:, None, None] * yy + slope_x[:, None, None] * xx

    maps = mags * np.exp(1j * phases)
    maps /= np.sqrt(np.sum(np.abs(maps) ** 2, axis=0, keepdims=True))
    stacked = np.stack((maps.real, maps.imag), axis=1).astype(np.float32)
    return SensitivityMaps(maps=torch.from_numpy(stacked))


@dataclass
class Measurement:
    """A (possibly noisy) measurement plus the operator that produced it."""

    y: Tensor
    noise_sigma: float
    operator_id: str


class ForwardOperator:
    """Base class for degradation operators.

    Subclasses implement :meth:`apply` and :meth:`adjoint` on raw tensors;
    both must accept the image / measurement shapes documented on the
    class. Operators are stateless after construction and safe to share.
    """

    kind: str = "abstract"

    def apply(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def adjoint(self, y: Tensor) -> Tensor:
        raise NotImplementedError

    def _fingerprint(self, *parts: object) -> str:
        blob = repr((self.kind,) + parts).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


class MriOperator(ForwardOperator):
    """Multi-coil MRI forward model: sensitivities, centered FFT, column mask."""

    kind = "MRI"

    def __init__(self, mask: CartesianMask, maps: SensitivityMaps):
        h, w = maps.shape
        if mask.width != w:
            raise ConfigurationError(
                f"mask width {mask.width} does not match map width {w}"
            )
        self.mask = mask
        self.maps = maps
        self._smaps = maps.as_complex()
        self._mask_row = mask.sampled_columns.to(torch.float32)
        self.image_shape = (2, h, w)
        self.op_id = self._fingerprint(
            mask.sampled_columns.numpy().tobytes(), maps.maps.numpy().tobytes()
        )

    def _check_image(self, x: Tensor) -> None:
        if tuple(x.shape) != self.image_shape:
            raise ContractError(
                f"expected image of shape {self.image_shape}, got {tuple(x.shape)}"
            )

    def apply(self, x: Tensor) -> Tensor:
        self._check_image(x)
        img = torch.complex(x[0], x[1])
        ksp = fft2c(self._smaps * img.unsqueeze(0))
        ksp = ksp * self._mask_row
        return _complex_to_channels(ksp, dim=1)

    def adjoint(self, y: Tensor) -> Tensor:
        coils = self.maps.coils
        expected = (coils, 2) + self.image_shape[1:]
        if tuple(y.shape) != expected:
            raise ContractError(
                f"expected measurement of shape {expected}, got {tuple(y.shape)}"
            )
        ksp = _channels_to_complex(y) * self._mask_row
        coil_imgs = ifft2c(ksp)
        img = (coil_imgs * self._smaps.conj()).sum(dim=0)
        return _complex_to_channels(img, dim=0)


class SuperResOperator(ForwardOperator):
    """Block-average downsampler with an exact adjoint."""

    kind = "SR"

    def __init__(self, factor: int):
        if factor < 1:
            raise ConfigurationError(f"factor must be >= 1, got {factor}")
        self.factor = int(factor)
        self.op_id = self._fingerprint(self.factor)

    def apply(self, x: Tensor) -> Tensor:
        f = self.factor
        if x.ndim != 3 or x.shape[-2] % f or x.shape[-1] % f:
            raise ContractError(
                f"factor {f} must divide the spatial dims, got {tuple(x.shape)}"
            )
        return F.avg_pool2d(x.unsqueeze(0), f).squeeze(0)

    def adjoint(self, y: Tensor) -> Tensor:
        if y.ndim != 3:
            raise ContractError(f"expected (C, h, w) measurement, got {tuple(y.shape)}")
        f = self.factor
        up = y.repeat_interleave(f, dim=-2).repeat_interleave(f, dim=-1)
        return up / (f * f)


class NonlinearBlurOperator(ForwardOperator):
    """Gaussian blur applied in a gamma-compressed intensity domain.

    ``y = (G * x^gamma)^(1/gamma)`` with a normalized truncated Gaussian
    kernel, reflect padding, and the power taken on the nonnegative part
    of the input. Maps [0, 1] images to [0, 1] images. The adjoint is the
    identity; it exists only to seed network inputs from measurements.
    """

    kind = "NDB"

    def __init__(self, gamma: float = 2.2, blur_sigma: float = 2.0, kernel_radius: int = 6):
        if gamma <= 0:
            raise ConfigurationError(f"gamma must be > 0, got {gamma}")
        if blur_sigma <= 0:
            raise ConfigurationError(f"blur_sigma must be > 0, got {blur_sigma}")
        if kernel_radius < 1:
            raise ConfigurationError(f"kernel_radius must be >= 1, got {kernel_radius}")
        self.gamma = float(gamma)
        self.blur_sigma = float(blur_sigma)
        self.kernel_radius = int(kernel_radius)
        offsets = torch.arange(-kernel_radius, kernel_radius + 1, dtype=torch.float32)
        line = torch.exp(-(offsets**2) / (2.0 * blur_sigma**2))
        kernel = torch.outer(line, line)
        self._kernel = kernel / kernel.sum()
        self.op_id = self._fingerprint(self.gamma, self.blur_sigma, self.kernel_radius)

    def apply(self, x: Tensor) -> Tensor:
        if x.ndim != 3:
            raise ContractError(f"expected (C, H, W) image, got {tuple(x.shape)}")
        r = self.kernel_radius
        c = x.shape[0]
        weight = self._kernel.to(x.dtype).expand(c, 1, -1, -1)
        compressed = x.clamp(min=0.0) ** self.gamma
        padded = F.pad(compressed.unsqueeze(0), (r, r, r, r), mode="reflect")
        blurred = F.conv2d(padded, weight, groups=c).squeeze(0)
        return blurred ** (1.0 / self.gamma)

    def adjoint(self, y: Tensor) -> Tensor:
        return y


def apply_forward(op: ForwardOperator, x: Tensor) -> Measurement:
    """Run the forward model and wrap the result as a noiseless measurement."""
    return Measurement(y=op.apply(x), noise_sigma=0.0, operator_id=op.op_id)


def apply_adjoint(op: ForwardOperator, y: Measurement | Tensor) -> Tensor:
    """Map a measurement back to image space with the operator's adjoint."""
    data = y.y if isinstance(y, Measurement) else y
    return op.adjoint(data)


def simulate_measurement(
    x_star: Tensor, op: ForwardOperator, sigma: float, seed: int
) -> Measurement:
    """Simulate ``y = A x* + eta`` with i.i.d. Gaussian measurement noise.

    For MRI the noise is restricted to sampled columns (real and imaginary
    channels alike) so non-sampled entries stay exactly zero. Deterministic
    given ``seed``.
    """
    if sigma < 0:
        raise ConfigurationError(f"noise sigma must be >= 0, got {sigma}")
    clean = op.apply(x_star).detach()
    if sigma == 0:
        return Measurement(y=clean.clone(), noise_sigma=0.0, operator_id=op.op_id)
    gen = torch.Generator().manual_seed(seed)
    noise = sigma * torch.randn(clean.shape, generator=gen, dtype=clean.dtype)
    y = clean + noise
    if isinstance(op, MriOperator):
        y = y * op.mask.sampled_columns.to(y.dtype)
    return Measurement(y=y, noise_sigma=float(sigma), operator_id=op.op_id)
