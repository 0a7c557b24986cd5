"""Quality metrics, spectral analysis, and per-run trace bookkeeping."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy.signal import correlate2d

from .errors import ContractError, UndefinedRatioError

PSNR_CAP_DB = 99.0

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _as_array(x) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        x = x.detach().cpu().numpy()
    return np.asarray(x, dtype=np.float64)


def to_magnitude(x) -> np.ndarray:
    """Collapse a 2-channel complex image to its magnitude; pass others through."""
    arr = _as_array(x)
    if arr.ndim == 3 and arr.shape[0] == 2:
        return np.sqrt(arr[0] ** 2 + arr[1] ** 2)[None]
    if arr.ndim == 2:
        return arr[None]
    return arr


def psnr(x_hat, x_star) -> float:
    """Peak signal-to-noise ratio in dB, capped at 99 for identical inputs.

    Two-channel complex images are compared as magnitude images; the peak
    is the maximum value of the reference.
    """
    a, b = to_magnitude(x_hat), to_magnitude(x_star)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    peak = float(b.max())
    value = 10.0 * math.log10(peak**2 / mse)
    return min(value, PSNR_CAP_DB)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    line = np.exp(-(offsets**2) / (2.0 * sigma**2))
    window = np.outer(line, line)
    return window / window.sum()


def ssim(x_hat, x_star) -> float:
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Windows are evaluated at valid positions only and averaged over all
    positions and channels. The data range is the peak of the reference
    image (1.0 when the reference is all zero).
    """
    a, b = to_magnitude(x_hat), to_magnitude(x_star)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[-2] < _SSIM_WINDOW or a.shape[-1] < _SSIM_WINDOW:
        raise ContractError(
            f"image {a.shape[-2:]} is smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} window"
        )
    data_range = float(b.max())
    if data_range <= 0:
        data_range = 1.0
    c1 = (_SSIM_K1 * data_range) ** 2
    c2 = (_SSIM_K2 * data_range) ** 2
    window = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)

    values = []
    for ch in range(a.shape[0]):
        x, y = a[ch], b[ch]
        mu_x = correlate2d(x, window, mode="valid")
        mu_y = correlate2d(y, window, mode="valid")
        xx = correlate2d(x * x, window, mode="valid") - mu_x**2
        yy = correlate2d(y * y, window, mode="valid") - mu_y**2
        xy = correlate2d(x * y, window, mode="valid") - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
        values.append(num / den)
    return float(np.mean(values))


@dataclass(frozen=True)
class FeatureSpectrum:
    """Centered 2-D Fourier magnitudes of a feature stack."""

    magnitudes: np.ndarray  # (channels, H, W), nonnegative
    center_fraction: float


def feature_spectrum(x, center_fraction: float = 0.25) -> FeatureSpectrum:
    """Compute per-channel centered Fourier magnitudes of ``x`` (C, H, W)."""
    arr = _as_array(x)
    if arr.ndim == 2:
        arr = arr[None]
    mags = np.abs(np.fft.fftshift(np.fft.fft2(arr), axes=(-2, -1)))
    return FeatureSpectrum(magnitudes=mags, center_fraction=float(center_fraction))


def lf_ratio(features: FeatureSpectrum) -> float:
    """Fraction of Fourier magnitude inside the centered low-frequency square.

    The square covers ``center_fraction`` of each axis and always contains
    the zero-frequency bin.
    """
    cf = features.center_fraction
    if not 0.0 < cf <= 1.0:
        raise ContractError(f"center_fraction must lie in (0, 1], got {cf}")
    mags = features.magnitudes
    total = float(mags.sum())
    if total == 0.0:
        raise UndefinedRatioError("all-zero feature maps have no defined ratio")
    h, w = mags.shape[-2], mags.shape[-1]
    side_h = min(h, max(1, round(cf * h)))
    side_w = min(w, max(1, round(cf * w)))
    r0 = h // 2 - side_h // 2
    c0 = w // 2 - side_w // 2
    center = mags[..., r0 : r0 + side_h, c0 : c0 + side_w]
    return float(center.sum()) / total


@dataclass(frozen=True)
class LayerSpectrumReport:
    layer: str
    lf_ratio: float


def spectral_probe(
    encoder, decoder, z, center_fraction: float = 0.25
) -> list[LayerSpectrumReport]:
    """Per-layer low-frequency ratios of encoder activations and the output.

    Runs one forward pass, computes :func:`lf_ratio` for every encoder
    level (shallow to deep) and for the decoder output, and returns
    ``depth + 1`` entries.
    """
    with torch.no_grad():
        bundle = encoder(z)
        out = decoder(bundle)
    reports = []
    for idx, feat in enumerate(bundle.features):
        ratio = lf_ratio(feature_spectrum(feat, center_fraction))
        reports.append(LayerSpectrumReport(layer=f"encoder_level_{idx + 1}", lf_ratio=ratio))
    reports.append(
        LayerSpectrumReport(
            layer="decoder_output",
            lf_ratio=lf_ratio(feature_spectrum(out, center_fraction)),
        )
    )
    return reports


@dataclass
class TraceRow:
    iteration: int
    data_fit: float
    autoenc: float
    psnr_db: float | None = None
    ssim: float | None = None


@dataclass
class MetricTrace:
    """Per-iteration loss (and optionally quality) records for one run."""

    run_id: str
    role: str = "train"
    rows: list[TraceRow] = field(default_factory=list)

    def append(
        self,
        iteration: int,
        data_fit: float,
        autoenc: float,
        psnr_db: float | None = None,
        ssim: float | None = None,
    ) -> None:
        if self.rows and iteration <= self.rows[-1].iteration:
            raise ContractError(
                f"iterations must increase: {iteration} after {self.rows[-1].iteration}"
            )
        for label, value in (("data_fit", data_fit), ("autoenc", autoenc)):
            if not math.isfinite(value):
                raise ContractError(f"non-finite {label} at iteration {iteration}")
        self.rows.append(TraceRow(iteration, float(data_fit), float(autoenc), psnr_db, ssim))

    @property
    def final_psnr(self) -> float | None:
        for row in reversed(self.rows):
            if row.psnr_db is not None:
                return row.psnr_db
        return None

    def psnr_series(self) -> list[tuple[int, float]]:
        return [(r.iteration, r.psnr_db) for r in self.rows if r.psnr_db is not None]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "data_fit", "autoenc", "psnr_db", "ssim"])
            for r in self.rows:
                writer.writerow(
                    [
                        r.iteration,
                        repr(r.data_fit),
                        repr(r.autoenc),
                        "" if r.psnr_db is None else repr(r.psnr_db),
                        "" if r.ssim is None else repr(r.ssim),
                    ]
                )

    @classmethod
    def read_csv(cls, path, run_id: str | None = None, role: str = "train") -> "MetricTrace":
        path = Path(path)
        trace = cls(run_id=run_id or path.stem, role=role)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                trace.append(
                    int(row["iteration"]),
                    float(row["data_fit"]),
                    float(row["autoenc"]),
                    float(row["psnr_db"]) if row["psnr_db"] else None,
                    float(row["ssim"]) if row["ssim"] else None,
                )
        return trace


class GuardedTruth:
    """Ground-truth holder that records every access with its purpose.

    The optimization paths never read ground truth; only metric logging
    does, and must say so. Tests assert that no read happened with a
    purpose other than ``"metrics"``.
    """

    def __init__(self, image):
        self._image = image
        self.reads: list[str] = []

    def read(self, purpose: str):
        self.reads.append(str(purpose))
        return self._image

    @property
    def foreign_reads(self) -> list[str]:
        return [p for p in self.reads if p != "metrics"]
