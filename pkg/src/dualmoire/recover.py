"""Recovery step: joint bilateral filtering of the focused frame.

The range weight always comes from the guide's BT.601 luma (so RGB and
grayscale guides behave consistently and the grid stays 3-D), measured on
the 0-255 code-value scale where the default sigma of 10 is meaningful.
All channels of the input share one weight field.

Two implementations: an exact windowed filter (`jbf_naive`) and a bilateral
grid (`jbf_fast`) that splats into a (x, y, luma) lattice, blurs it, and
slices trilinearly.  The grid is the production path; the naive filter is
its verification oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from dualmoire.imgcore import Image, luma


@dataclass(frozen=True)
class JbfParams:
    window: int = 51
    sigma_range: float = 10.0  # code values on the 0-255 scale
    sigma_spatial: float = 10.0  # pixels

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")
        if self.sigma_range <= 0 or self.sigma_spatial <= 0:
            raise ValueError("sigmas must be positive")


def _check_pair(input_img: Image, guide: Image) -> None:
    if (input_img.height, input_img.width) != (guide.height, guide.width):
        raise ValueError(
            f"input {input_img.width}x{input_img.height} vs guide "
            f"{guide.width}x{guide.height}")


def jbf_naive(input_img: Image, guide: Image, p: JbfParams) -> Image:
    """Direct windowed joint bilateral filter, mirror border."""
    _check_pair(input_img, guide)
    r = p.window // 2
    h, w = input_img.height, input_img.width
    g = luma(guide) * 255.0
    gp = np.pad(g, r, mode="symmetric")
    ip = np.pad(input_img.data, ((0, 0), (r, r), (r, r)), mode="symmetric")
    inv2ss = 1.0 / (2.0 * p.sigma_spatial ** 2)
    inv2sr = 1.0 / (2.0 * p.sigma_range ** 2)

    num = np.zeros_like(input_img.data)
    den = np.zeros((h, w))
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            ws = math.exp(-(dx * dx + dy * dy) * inv2ss)
            gs = gp[r + dy: r + dy + h, r + dx: r + dx + w]
            wgt = ws * np.exp(-((g - gs) ** 2) * inv2sr)
            den += wgt
            num += wgt * ip[:, r + dy: r + dy + h, r + dx: r + dx + w]
    return Image(num / den)


# 5-tap grid blur: Gaussian whose variance, together with the triangle
# kernels implied by trilinear splat and slice (1/6 cell^2 each), totals
# one grid cell^2, i.e. the target bilateral sigma.
_GRID_BLUR_SIGMA = math.sqrt(2.0 / 3.0)
_GRID_TAPS = np.exp(-(np.arange(-2, 3, dtype=np.float64) ** 2)
                    / (2.0 * _GRID_BLUR_SIGMA ** 2))
_GRID_TAPS = _GRID_TAPS / _GRID_TAPS.sum()

_GRID_PAD = 2


def jbf_fast(input_img: Image, guide: Image, p: JbfParams) -> Image:
    """Bilateral-grid approximation of jbf_naive.

    Input and guide are mirror-padded by the window radius first, so border
    behavior tracks the naive filter; spatial cells are sigma_spatial wide
    and range cells sigma_range (on the 0-255 scale, i.e. sigma_range/255
    in sample units).
    """
    _check_pair(input_img, guide)
    r = p.window // 2
    g0 = np.clip(luma(guide), 0.0, 1.0)
    g = np.pad(g0, r, mode="symmetric")
    ip = np.pad(input_img.data, ((0, 0), (r, r), (r, r)), mode="symmetric")
    c, h, w = ip.shape

    ss = p.sigma_spatial
    sr = p.sigma_range / 255.0

    gx = np.arange(w, dtype=np.float64) / ss + _GRID_PAD
    gy = np.arange(h, dtype=np.float64) / ss + _GRID_PAD
    gz = g / sr + _GRID_PAD
    nx = int(math.floor((w - 1) / ss)) + 1 + 2 * _GRID_PAD + 1
    ny = int(math.floor((h - 1) / ss)) + 1 + 2 * _GRID_PAD + 1
    nz = int(math.floor(1.0 / sr)) + 1 + 2 * _GRID_PAD + 1

    gxx, gyy = np.meshgrid(gx, gy)
    x0 = np.floor(gxx).astype(np.intp)
    y0 = np.floor(gyy).astype(np.intp)
    z0 = np.floor(gz).astype(np.intp)
    fx = gxx - x0
    fy = gyy - y0
    fz = gz - z0

    ncells = ny * nx * nz
    grid = np.zeros((c + 1, ncells))
    vals = np.concatenate([ip, np.ones((1, h, w))]).reshape(c + 1, -1)
    for cy, wy in ((y0, 1.0 - fy), (y0 + 1, fy)):
        for cx, wx in ((x0, 1.0 - fx), (x0 + 1, fx)):
            for cz, wz in ((z0, 1.0 - fz), (z0 + 1, fz)):
                idx = ((cy * nx + cx) * nz + cz).ravel()
                wgt = (wy * wx * wz).ravel()
                for ch in range(c + 1):
                    grid[ch] += np.bincount(idx, weights=vals[ch] * wgt,
                                            minlength=ncells)

    grid = grid.reshape(c + 1, ny, nx, nz)
    for axis in (1, 2, 3):
        grid = ndimage.correlate1d(grid, _GRID_TAPS, axis=axis, mode="constant")

    def _slice(vol: np.ndarray) -> np.ndarray:
        v000 = vol[y0, x0, z0]
        v001 = vol[y0, x0, z0 + 1]
        v010 = vol[y0, x0 + 1, z0]
        v011 = vol[y0, x0 + 1, z0 + 1]
        v100 = vol[y0 + 1, x0, z0]
        v101 = vol[y0 + 1, x0, z0 + 1]
        v110 = vol[y0 + 1, x0 + 1, z0]
        v111 = vol[y0 + 1, x0 + 1, z0 + 1]
        c00 = v000 * (1 - fz) + v001 * fz
        c01 = v010 * (1 - fz) + v011 * fz
        c10 = v100 * (1 - fz) + v101 * fz
        c11 = v110 * (1 - fz) + v111 * fz
        return (c00 * (1 - fx) + c01 * fx) * (1 - fy) + (c10 * (1 - fx) + c11 * fx) * fy

    den = _slice(grid[c])
    den = np.maximum(den, 1e-12)
    out = np.empty((c, h, w))
    for ch in range(c):
        out[ch] = _slice(grid[ch]) / den
    return Image(out[:, r: h - r, r: w - r])


def recover(focused: Image, guide: Image, p: JbfParams | None = None,
            impl: str = "fast") -> Image:
    """Final output: joint bilateral filter of the focused frame with the
    (moire-free) guide; `impl` selects the grid or the exact filter."""
    p = p or JbfParams()
    if impl == "fast":
        return jbf_fast(focused, guide, p)
    if impl == "naive":
        return jbf_naive(focused, guide, p)
    raise ValueError(f"unknown jbf implementation {impl!r}")
