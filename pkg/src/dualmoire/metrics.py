"""Quality and temporal-consistency metrics.

PSNR works on the [0, 1] sample domain (peak 1, capped at 100 dB), SSIM on
BT.601 luma with the standard 11x11 / sigma 1.5 window over fully valid
positions.  The temporal scores compare adjacent frames without motion
compensation so they stay computable when no ground truth exists; t-MSE is
reported on the 0-255 code-value scale to keep magnitudes in the familiar
double-digit range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from dualmoire.imgcore import Image, luma

PSNR_CAP_DB = 100.0


def _check_dims(a: Image, b: Image) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")


def mse(a: Image, b: Image) -> float:
    _check_dims(a, b)
    d = a.data - b.data
    return float(np.mean(d * d))


def psnr(a: Image, b: Image) -> float:
    """10*log10(1/MSE) on [0, 1] samples, capped at 100 dB."""
    m = mse(a, b)
    if m == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / m), PSNR_CAP_DB)


def _ssim_window() -> np.ndarray:
    half = 5
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * 1.5 * 1.5))
    g /= g.sum()
    return np.outer(g, g)


_SSIM_WIN = _ssim_window()


def _filter_valid(plane: np.ndarray) -> np.ndarray:
    """Correlate with the SSIM window, keeping only fully covered positions."""
    from scipy.signal import fftconvolve

    return fftconvolve(plane, _SSIM_WIN, mode="valid")


def ssim(a: Image, b: Image) -> float:
    """Mean SSIM over luma, 11x11 Gaussian window (sigma 1.5), K1/K2 = 0.01/0.03, L = 1."""
    _check_dims(a, b)
    if a.height < 11 or a.width < 11:
        raise ValueError(f"image {a.width}x{a.height} smaller than the 11x11 SSIM window")
    x = luma(a)
    y = luma(b)
    c1 = 0.01 ** 2
    c2 = 0.03 ** 2
    mu_x = _filter_valid(x)
    mu_y = _filter_valid(y)
    xx = _filter_valid(x * x) - mu_x * mu_x
    yy = _filter_valid(y * y) - mu_y * mu_y
    xy = _filter_valid(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def l1_distance(a: Image, b: Image) -> float:
    """Mean absolute sample difference."""
    _check_dims(a, b)
    return float(np.mean(np.abs(a.data - b.data)))


def hf_distance(a: Image, b: Image) -> float:
    """Mean |FFT2(a) - FFT2(b)| with orthonormal scaling, averaged over channels."""
    _check_dims(a, b)
    total = 0.0
    for c in range(a.channels):
        fa = np.fft.fft2(a.data[c], norm="ortho")
        fb = np.fft.fft2(b.data[c], norm="ortho")
        total += float(np.mean(np.abs(fa - fb)))
    return total / a.channels


def t_mse(frames: Sequence[Image]) -> float:
    """Mean adjacent-frame MSE on the 0-255 code-value scale."""
    if len(frames) < 2:
        raise ValueError("t_mse needs at least 2 frames")
    vals = [mse(frames[t], frames[t + 1]) * 255.0 ** 2 for t in range(len(frames) - 1)]
    return math.fsum(vals) / len(vals)


def t_ssim(frames: Sequence[Image]) -> float:
    """Mean adjacent-frame SSIM."""
    if len(frames) < 2:
        raise ValueError("t_ssim needs at least 2 frames")
    vals = [ssim(frames[t], frames[t + 1]) for t in range(len(frames) - 1)]
    return math.fsum(vals) / len(vals)


@dataclass
class MetricReport:
    """Per-frame metric values plus their arithmetic means."""

    per_frame: dict[str, list[float]] = field(default_factory=dict)
    video: dict[str, float] = field(default_factory=dict)

    @property
    def frames(self) -> int:
        if not self.per_frame:
            return 0
        return len(next(iter(self.per_frame.values())))

    def add(self, name: str, value: float) -> None:
        self.per_frame.setdefault(name, []).append(value)

    def mean(self, name: str) -> float:
        vals = self.per_frame[name]
        # compensated summation keeps the aggregate independent of ordering
        return math.fsum(vals) / len(vals)

    def means(self) -> dict[str, float]:
        return {name: self.mean(name) for name in self.per_frame}


def compare_images(pred: Image, gt: Image, report: MetricReport) -> None:
    report.add("psnr", psnr(pred, gt))
    report.add("ssim", ssim(pred, gt))
    report.add("l1", l1_distance(pred, gt))
    report.add("hf", hf_distance(pred, gt))
