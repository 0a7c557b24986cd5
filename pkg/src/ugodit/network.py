"""Convolutional encoder / decoder backbone.

The encoder is a stack of strided-convolution levels that halve the
spatial size; the decoder mirrors it with nearest-neighbor upsampling and
convolutions. Skip features are produced by the encoder, but the
convolutions that consume them belong to the decoder, so several decoders
can share one encoder without sharing any decoder-side weights. The final
activation is a sigmoid, clamping outputs to [0, 1].
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ArchitectureError, ConfigurationError, ContractError
from .seeding import derive_seed

Tensor = torch.Tensor

_ACTIVATIONS = {"leaky_relu": lambda x: F.leaky_relu(x, 0.2), "relu": F.relu}
_UPSAMPLE_MODES = ("nearest", "bilinear")


@dataclass(frozen=True)
class ArchitectureSpec:
    """Static description of the encoder/decoder pair."""

    depth: int = 5
    channels: tuple[int, ...] = (16, 32, 64, 64, 128)
    kernel_size: int = 3
    in_channels: int = 2
    out_channels: int = 2
    skip: bool = True
    activation: str = "leaky_relu"
    upsample_mode: str = "nearest"

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        if len(self.channels) != self.depth:
            raise ConfigurationError(
                f"need one channel width per level: depth {self.depth}, "
                f"got {len(self.channels)} widths"
            )
        if self.kernel_size % 2 != 1 or self.kernel_size < 1:
            raise ConfigurationError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.upsample_mode not in _UPSAMPLE_MODES:
            raise ConfigurationError(f"unknown upsample_mode {self.upsample_mode!r}")

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "channels": list(self.channels),
            "kernel_size": self.kernel_size,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "skip": self.skip,
            "activation": self.activation,
            "upsample_mode": self.upsample_mode,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ArchitectureSpec":
        return cls(
            depth=int(data["depth"]),
            channels=tuple(data["channels"]),
            kernel_size=int(data["kernel_size"]),
            in_channels=int(data["in_channels"]),
            out_channels=int(data["out_channels"]),
            skip=bool(data["skip"]),
            activation=str(data["activation"]),
            upsample_mode=str(data["upsample_mode"]),
        )


@dataclass
class LatentBundle:
    """Encoder activations: one feature map per level, shallow to deep."""

    features: tuple[Tensor, ...]
    fingerprint: str
    skip: bool

    @property
    def bottleneck(self) -> Tensor:
        return self.features[-1]

    @property
    def skips(self) -> tuple[Tensor, ...]:
        return self.features[:-1] if self.skip else ()


class Encoder(nn.Module):
    """Downsampling half of the network; shared across decoders."""

    def __init__(self, spec: ArchitectureSpec):
        super().__init__()
        self.spec = spec
        self.fingerprint = spec.fingerprint()
        k, pad = spec.kernel_size, spec.kernel_size // 2
        downs, refines = [], []
        c_in = spec.in_channels
        for width in spec.channels:
            downs.append(nn.Conv2d(c_in, width, k, stride=2, padding=pad))
            refines.append(nn.Conv2d(width, width, k, padding=pad))
            c_in = width
        self.downs = nn.ModuleList(downs)
        self.refines = nn.ModuleList(refines)
        self._act = _ACTIVATIONS[spec.activation]

    def forward(self, z: Tensor) -> LatentBundle:
        spec = self.spec
        if z.ndim != 3 or z.shape[0] != spec.in_channels:
            raise ContractError(
                f"expected ({spec.in_channels}, H, W) input, got {tuple(z.shape)}"
            )
        factor = 2**spec.depth
        if z.shape[-2] % factor or z.shape[-1] % factor:
            raise ContractError(
                f"spatial dims {tuple(z.shape[-2:])} must be multiples of {factor}"
            )
        x = z.unsqueeze(0)
        features = []
        for down, refine in zip(self.downs, self.refines):
            x = self._act(down(x))
            x = self._act(refine(x))
            features.append(x.squeeze(0))
        return LatentBundle(
            features=tuple(features), fingerprint=self.fingerprint, skip=spec.skip
        )


class Decoder(nn.Module):
    """Upsampling half of the network; owns the skip-consuming convolutions."""

    def __init__(self, spec: ArchitectureSpec):
        super().__init__()
        self.spec = spec
        self.fingerprint = spec.fingerprint()
        k, pad = spec.kernel_size, spec.kernel_size // 2
        ch = spec.channels
        ups = []
        for level in range(spec.depth - 1, 0, -1):
            c_in = ch[level] + (ch[level - 1] if spec.skip else 0)
            ups.append(nn.Conv2d(c_in, ch[level - 1], k, padding=pad))
        self.ups = nn.ModuleList(ups)
        self.head = nn.Conv2d(ch[0], ch[0], k, padding=pad)
        self.out = nn.Conv2d(ch[0], spec.out_channels, 1)
        self._act = _ACTIVATIONS[spec.activation]

    def _upsample(self, x: Tensor) -> Tensor:
        if self.spec.upsample_mode == "nearest":
            return F.interpolate(x, scale_factor=2, mode="nearest")
        return F.interpolate(
            x, scale_factor=2, mode="bilinear", align_corners=False
        )

    def forward(self, latent: LatentBundle) -> Tensor:
        spec = self.spec
        if latent.fingerprint != self.fingerprint:
            raise ArchitectureError(
                f"latent fingerprint {latent.fingerprint} does not match "
                f"decoder fingerprint {self.fingerprint}"
            )
        if len(latent.features) != spec.depth:
            raise ContractError(
                f"expected {spec.depth} feature levels, got {len(latent.features)}"
            )
        x = latent.bottleneck.unsqueeze(0)
        for conv, level in zip(self.ups, range(spec.depth - 1, 0, -1)):
            x = self._upsample(x)
            if spec.skip:
                x = torch.cat([x, latent.features[level - 1].unsqueeze(0)], dim=1)
            x = self._act(conv(x))
        x = self._upsample(x)
        x = self._act(self.head(x))
        return torch.sigmoid(self.out(x)).squeeze(0)


def _init_module(module: nn.Module, sigma_ini: float | str, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    auto = isinstance(sigma_ini, str)
    if auto and sigma_ini != "auto":
        raise ConfigurationError(f"sigma_ini must be a number or 'auto', got {sigma_ini!r}")
    if not auto and sigma_ini < 0:
        raise ConfigurationError(f"sigma_ini must be >= 0, got {sigma_ini}")
    with torch.no_grad():
        for name, p in module.named_parameters():
            if name.endswith("bias"):
                p.zero_()
                continue
            if auto:
                fan_in = math.prod(p.shape[1:])
                std = math.sqrt(2.0 / fan_in)
            else:
                std = float(sigma_ini)
            if std == 0.0:
                p.zero_()
            else:
                p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * std)


def init_group(
    spec: ArchitectureSpec, sigma_ini: float | str, seed: int, m: int
) -> tuple[Encoder, list[Decoder]]:
    """Build one encoder and ``m`` decoders with seeded Gaussian weights.

    ``sigma_ini`` is either a weight standard deviation (0 gives an
    all-zero network) or ``"auto"`` for per-layer fan-in scaling
    ``std = sqrt(2 / fan_in)``. Encoder and each decoder draw from
    independent sub-streams of ``seed``; biases start at zero.
    """
    if m < 1:
        raise ConfigurationError(f"need at least one decoder, got m={m}")
    encoder = Encoder(spec)
    _init_module(encoder, sigma_ini, derive_seed(seed, "encoder"))
    decoders = []
    for i in range(m):
        decoder = Decoder(spec)
        _init_module(decoder, sigma_ini, derive_seed(seed, "decoder", i))
        decoders.append(decoder)
    return encoder, decoders


def init_params(
    spec: ArchitectureSpec, sigma_ini: float | str, seed: int
) -> tuple[Encoder, Decoder]:
    """Single encoder/decoder variant of :func:`init_group`."""
    encoder, decoders = init_group(spec, sigma_ini, seed, 1)
    return encoder, decoders[0]


def encode(encoder: Encoder, z: Tensor) -> LatentBundle:
    return encoder(z)


def decode(decoder: Decoder, latent: LatentBundle) -> Tensor:
    return decoder(latent)


def forward_pass(encoder: Encoder, decoder: Decoder, z: Tensor) -> Tensor:
    """Full network output ``decode(encode(z))``."""
    return decoder(encoder(z))


def state_checksum(module: nn.Module) -> str:
    """Hash of all parameter bytes; used to assert frozen weights."""
    h = hashlib.sha256()
    for name, p in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()
