import math

import numpy as np
import pytest
import torch

from ugodit import (
    FeatureSpectrum,
    MetricTrace,
    feature_spectrum,
    init_params,
    lf_ratio,
    psnr,
    spectral_probe,
    ssim,
)
from ugodit.errors import ContractError, UndefinedRatioError
from ugodit.network import ArchitectureSpec


class TestPsnr:
    def test_identical_hits_cap(self):
        x = np.random.default_rng(0).random((1, 16, 16))
        assert psnr(x, x) == 99.0

    def test_uniform_offset_closed_form(self):
        rng = np.random.default_rng(1)
        x_star = rng.random((1, 32, 32)) * 0.8
        x_star[0, 0, 0] = 1.0  # pin the peak at exactly 1
        x_hat = x_star + 0.1
        assert abs(psnr(x_hat, x_star) - 20.0) < 1e-9

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(2)
        x_star = rng.random((1, 12, 12))
        x_hat = rng.random((1, 12, 12))
        acc = 0.0
        for i in range(12):
            for j in range(12):
                acc += (x_hat[0, i, j] - x_star[0, i, j]) ** 2
        mse = acc / 144.0
        expected = 10.0 * math.log10(x_star.max() ** 2 / mse)
        assert abs(psnr(x_hat, x_star) - expected) < 1e-9

    def test_two_channel_inputs_compare_magnitudes(self):
        rng = np.random.default_rng(3)
        real = rng.random((32, 32))
        imag = rng.random((32, 32))
        x = np.stack([real, imag])
        mag = np.sqrt(real**2 + imag**2)[None]
        assert psnr(x, x * 0.9) == pytest.approx(psnr(mag, mag * 0.9), abs=1e-9)

    def test_monotone_in_noise_level(self):
        rng = np.random.default_rng(4)
        x = rng.random((1, 24, 24))
        values = []
        for sigma in (0.01, 0.05, 0.1):
            noisy = x + sigma * np.random.default_rng(7).standard_normal(x.shape)
            values.append(psnr(noisy, x))
        assert values[0] > values[1] > values[2]

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            psnr(np.zeros((1, 8, 8)), np.zeros((1, 9, 9)))


def _gaussian_window(size=11, sigma=1.5):
    offs = np.arange(size) - (size - 1) / 2.0
    line = np.exp(-(offs**2) / (2 * sigma**2))
    win = np.outer(line, line)
    return win / win.sum()


def ssim_windowed_reference(a, b, data_range):
    """Independent double-loop implementation over valid windows."""
    win = _gaussian_window()
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    values = []
    for ch in range(a.shape[0]):
        x, y = a[ch], b[ch]
        for i in range(x.shape[0] - 10):
            for j in range(x.shape[1] - 10):
                wx = x[i : i + 11, j : j + 11]
                wy = y[i : i + 11, j : j + 11]
                mx = (wx * win).sum()
                my = (wy * win).sum()
                vx = (wx * wx * win).sum() - mx**2
                vy = (wy * wy * win).sum() - my**2
                vxy = (wx * wy * win).sum() - mx * my
                num = (2 * mx * my + c1) * (2 * vxy + c2)
                den = (mx**2 + my**2 + c1) * (vx + vy + c2)
                values.append(num / den)
    return float(np.mean(values))


class TestSsim:
    def test_identical_is_exactly_one(self):
        x = np.random.default_rng(0).random((1, 16, 16))
        assert ssim(x, x) == 1.0

    def test_constant_images_luminance_only(self):
        c1_val, c2_val = 0.3, 0.7
        a = np.full((1, 16, 16), c1_val)
        b = np.full((1, 16, 16), c2_val)
        data_range = c2_val
        k1 = (0.01 * data_range) ** 2
        expected = (2 * c1_val * c2_val + k1) / (c1_val**2 + c2_val**2 + k1)
        assert ssim(a, b) == pytest.approx(expected, abs=1e-9)

    def test_matches_bruteforce_reference(self):
        rng = np.random.default_rng(5)
        a = rng.random((1, 20, 20))
        b = rng.random((1, 20, 20))
        expected = ssim_windowed_reference(a, b, data_range=float(b.max()))
        assert ssim(a, b) == pytest.approx(expected, abs=1e-6)

    def test_symmetric_with_equal_ranges(self):
        rng = np.random.default_rng(6)
        a = rng.random((1, 16, 16))
        b = rng.random((1, 16, 16))
        a[0, 0, 0] = b[0, 0, 0] = 1.0
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_image_smaller_than_window_rejected(self):
        with pytest.raises(ContractError):
            ssim(np.zeros((1, 8, 8)), np.zeros((1, 8, 8)))


class TestLfRatio:
    def test_constant_image_is_all_dc(self):
        spectrum = feature_spectrum(np.full((1, 32, 32), 0.7), 0.25)
        assert lf_ratio(spectrum) == 1.0

    def test_white_noise_matches_area_fraction(self):
        rng = np.random.default_rng(7)
        ratios = []
        for _ in range(100):
            noise = rng.standard_normal((1, 64, 64))
            ratios.append(lf_ratio(feature_spectrum(noise, 0.25)))
        assert abs(np.mean(ratios) - 0.0625) < 0.02

    def test_scale_invariance(self):
        rng = np.random.default_rng(8)
        x = rng.random((2, 16, 16))
        r1 = lf_ratio(feature_spectrum(x, 0.25))
        r2 = lf_ratio(feature_spectrum(37.0 * x, 0.25))
        assert r1 == pytest.approx(r2, rel=1e-12)

    def test_all_zero_rejected(self):
        with pytest.raises(UndefinedRatioError):
            lf_ratio(feature_spectrum(np.zeros((1, 16, 16)), 0.25))

    def test_full_fraction_is_one(self):
        rng = np.random.default_rng(9)
        assert lf_ratio(feature_spectrum(rng.random((1, 16, 16)), 1.0)) == 1.0

    def test_bad_fraction_rejected(self):
        spectrum = FeatureSpectrum(np.ones((1, 8, 8)), 1.5)
        with pytest.raises(ContractError):
            lf_ratio(spectrum)


class TestSpectralProbe:
    def test_report_length_and_bounds(self):
        spec = ArchitectureSpec(
            depth=3, channels=(6, 8, 8), in_channels=2, out_channels=2
        )
        enc, dec = init_params(spec, "auto", seed=0)
        z = torch.rand(2, 32, 32, generator=torch.Generator().manual_seed(0))
        reports = spectral_probe(enc, dec, z, 0.25)
        assert len(reports) == spec.depth + 1
        assert reports[-1].layer == "decoder_output"
        assert all(0.0 < r.lf_ratio <= 1.0 for r in reports)


class TestMetricTrace:
    def test_round_trip_lossless(self, tmp_path):
        trace = MetricTrace(run_id="t", role="test")
        trace.append(1, 0.123456789123, 9.87654321e-7)
        trace.append(2, 0.2, 0.3, psnr_db=31.234567890123456, ssim=0.91)
        path = tmp_path / "trace.csv"
        trace.write_csv(path)
        back = MetricTrace.read_csv(path, run_id="t", role="test")
        assert back.rows == trace.rows

    def test_iterations_must_increase(self):
        trace = MetricTrace(run_id="t")
        trace.append(3, 1.0, 1.0)
        with pytest.raises(ContractError):
            trace.append(3, 1.0, 1.0)

    def test_non_finite_rejected(self):
        trace = MetricTrace(run_id="t")
        with pytest.raises(ContractError):
            trace.append(1, float("nan"), 0.0)
