"""Image container and resampling primitives shared by the whole toolkit.

Images are planar float64 rasters, one contiguous row-major plane per
channel, samples nominally in [0, 1].  Everything here is a pure function:
inputs are never mutated and identical inputs give bit-identical outputs.
PNG (8/16-bit, grayscale/RGB) is the only raster interchange format.

Border conventions, fixed once for the whole package:
  * Gaussian blur mirrors with edge repeat ("symmetric"), which conserves
    total mass exactly for a normalized kernel.
  * Warps clamp to the nearest edge pixel, so geometry changes never
    introduce phantom black borders.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage


class PngFormatError(ValueError):
    """PNG exists but uses a bit depth or color type we do not support."""


@dataclass(frozen=True)
class Image:
    """Planar raster: ``data`` has shape (channels, height, width), float64."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim == 2:
            d = d[None]
        if d.ndim != 3 or d.shape[0] not in (1, 3):
            raise ValueError(f"expected (c, h, w) with 1 or 3 channels, got shape {d.shape}")
        if d.shape[1] < 1 or d.shape[2] < 1:
            raise ValueError(f"empty image: shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("image samples must be finite")
        d = np.ascontiguousarray(d)
        d.flags.writeable = False
        object.__setattr__(self, "data", d)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_interleaved(cls, arr: np.ndarray) -> "Image":
        """Build from an (h, w) or (h, w, c) array."""
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 2:
            return cls(a[None])
        return cls(np.moveaxis(a, -1, 0))

    def to_interleaved(self) -> np.ndarray:
        """Return an (h, w, c) copy (or (h, w) for single channel)."""
        if self.channels == 1:
            return self.data[0].copy()
        return np.moveaxis(self.data, 0, -1).copy()

    def plane(self, c: int) -> np.ndarray:
        return self.data[c]


@dataclass(frozen=True)
class Homography:
    """3x3 projective map in pixel coordinates, normalized so m[2, 2] == 1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        if abs(m[2, 2]) < 1e-12:
            raise ValueError("homography has zero bottom-right element")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) < 1e-12:
            raise ValueError("homography is singular")
        if abs(np.linalg.det(m[:2, :2])) < 1e-12:
            raise ValueError("degenerate upper-left 2x2 block")
        m = np.ascontiguousarray(m)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Homography":
        m = np.eye(3)
        m[0, 2] = dx
        m[1, 2] = dy
        return cls(m)

    def compose(self, other: "Homography") -> "Homography":
        """self applied after other: (self @ other)(p) = self(other(p))."""
        return Homography(self.matrix @ other.matrix)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def apply(self, pts: np.ndarray) -> np.ndarray:
        """Map (n, 2) points through the homography."""
        p = np.asarray(pts, dtype=np.float64)
        ones = np.ones((p.shape[0], 1))
        q = np.hstack([p, ones]) @ self.matrix.T
        return q[:, :2] / q[:, 2:3]


# ---------------------------------------------------------------------------
# PNG I/O


def _read_ihdr(path: Path) -> tuple[int, int]:
    """Return (bit_depth, color_type) from the PNG header, validating magic."""
    with open(path, "rb") as f:
        head = f.read(33)
    if len(head) < 33 or head[:8] != b"\x89PNG\r\n\x1a\n" or head[12:16] != b"IHDR":
        raise PngFormatError(f"not a PNG file: {path}")
    bit_depth, color_type = head[24], head[25]
    return bit_depth, color_type


def load_png(path) -> Image:
    """Load an 8/16-bit grayscale or RGB PNG, normalized to [0, 1]; alpha dropped."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such image: {p}")
    bit_depth, color_type = _read_ihdr(p)
    if bit_depth not in (8, 16):
        raise PngFormatError(f"unsupported bit depth {bit_depth} in {p}")
    if color_type not in (0, 2, 4, 6):
        raise PngFormatError(f"unsupported PNG color type {color_type} in {p}")
    raw = cv2.imread(str(p), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise PngFormatError(f"failed to decode {p}")
    scale = 65535.0 if raw.dtype == np.uint16 else 255.0
    if raw.ndim == 2:
        return Image(raw.astype(np.float64) / scale)
    if raw.shape[2] == 2:  # gray + alpha
        return Image(raw[..., 0].astype(np.float64) / scale)
    rgb = raw[..., 2::-1]  # BGR(A) -> RGB, alpha dropped
    return Image.from_interleaved(rgb.astype(np.float64) / scale)


def load_png_rgba(path) -> tuple[Image, Image]:
    """Load an RGBA PNG as (rgb, alpha); alpha is all-ones when absent."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such image: {p}")
    bit_depth, color_type = _read_ihdr(p)
    if bit_depth not in (8, 16):
        raise PngFormatError(f"unsupported bit depth {bit_depth} in {p}")
    if color_type not in (0, 2, 4, 6):
        raise PngFormatError(f"unsupported PNG color type {color_type} in {p}")
    raw = cv2.imread(str(p), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise PngFormatError(f"failed to decode {p}")
    scale = 65535.0 if raw.dtype == np.uint16 else 255.0
    arr = raw.astype(np.float64) / scale
    if arr.ndim == 2:
        rgb = np.repeat(arr[None], 3, axis=0)
        return Image(rgb), Image(np.ones_like(arr))
    if arr.shape[2] == 2:
        rgb = np.repeat(arr[..., 0][None], 3, axis=0)
        return Image(rgb), Image(arr[..., 1])
    rgb = Image.from_interleaved(arr[..., 2::-1])
    if arr.shape[2] == 4:
        return rgb, Image(arr[..., 3])
    return rgb, Image(np.ones(arr.shape[:2]))


def save_png(img: Image, path, bit_depth: int = 8) -> None:
    """Write PNG after clamping to [0, 1] and quantizing with round-half-up."""
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    peak = (1 << bit_depth) - 1
    # floor(v * peak + 0.5): ties round away from zero so goldens are stable
    q = np.floor(np.clip(img.data, 0.0, 1.0) * peak + 0.5)
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    arr = q.astype(dtype)
    if img.channels == 1:
        out = arr[0]
    else:
        out = np.moveaxis(arr[::-1], 0, -1)  # RGB -> BGR for the encoder
    out = np.ascontiguousarray(out)
    ok = cv2.imwrite(str(path), out)
    if not ok:
        raise OSError(f"cannot write {path}")


# ---------------------------------------------------------------------------
# Filtering and resampling


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian, truncated at radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: Image, sigma: float) -> Image:
    """Separable Gaussian blur with mass-conserving mirror border."""
    k = gaussian_kernel1d(sigma)
    out = np.empty_like(img.data)
    for c in range(img.channels):
        tmp = ndimage.correlate1d(img.data[c], k, axis=0, mode="reflect")
        out[c] = ndimage.correlate1d(tmp, k, axis=1, mode="reflect")
    return Image(out)


def sample_bilinear(plane: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample a 2-D plane at float coordinates, clamping to the edge."""
    h, w = plane.shape
    x = np.clip(xs, 0.0, w - 1.0)
    y = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = plane[y0, x0] * (1.0 - fx) + plane[y0, x1] * fx
    bot = plane[y1, x0] * (1.0 - fx) + plane[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def warp_projective(img: Image, h: Homography, out_w: int, out_h: int) -> Image:
    """Inverse-map each output pixel through h and sample bilinearly."""
    hinv = h.inverse().matrix
    xs, ys = np.meshgrid(np.arange(out_w, dtype=np.float64),
                         np.arange(out_h, dtype=np.float64))
    denom = hinv[2, 0] * xs + hinv[2, 1] * ys + hinv[2, 2]
    sx = (hinv[0, 0] * xs + hinv[0, 1] * ys + hinv[0, 2]) / denom
    sy = (hinv[1, 0] * xs + hinv[1, 1] * ys + hinv[1, 2]) / denom
    out = np.empty((img.channels, out_h, out_w))
    for c in range(img.channels):
        out[c] = sample_bilinear(img.data[c], sx, sy)
    return Image(out)


def resize_bilinear(img: Image, out_w: int, out_h: int) -> Image:
    """Bilinear resize with pixel-center mapping (align-corners false)."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output dimensions must be >= 1, got {out_w}x{out_h}")
    if out_w == img.width and out_h == img.height:
        return img
    sx_scale = img.width / out_w
    sy_scale = img.height / out_h
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * sx_scale - 0.5
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * sy_scale - 0.5
    gx, gy = np.meshgrid(xs, ys)
    out = np.empty((img.channels, out_h, out_w))
    for c in range(img.channels):
        out[c] = sample_bilinear(img.data[c], gx, gy)
    return Image(out)


# BT.601 full-range luma weights; shared with metrics and the JBF guides.
_KR, _KG, _KB = 0.299, 0.587, 0.114


def luma(img: Image) -> np.ndarray:
    """BT.601 luma plane of an RGB image (identity for grayscale)."""
    if img.channels == 1:
        return img.data[0]
    r, g, b = img.data
    return _KR * r + _KG * g + _KB * b


def rgb_to_ycbcr(img: Image) -> Image:
    """BT.601 full-range: Y in [0, 1], Cb/Cr in [-0.5, 0.5]."""
    if img.channels != 3:
        raise ValueError(f"rgb_to_ycbcr needs 3 channels, got {img.channels}")
    r, g, b = img.data
    y = _KR * r + _KG * g + _KB * b
    cb = (b - y) / (2.0 * (1.0 - _KB))
    cr = (r - y) / (2.0 * (1.0 - _KR))
    return Image(np.stack([y, cb, cr]))


def ycbcr_to_rgb(img: Image) -> Image:
    if img.channels != 3:
        raise ValueError(f"ycbcr_to_rgb needs 3 channels, got {img.channels}")
    y, cb, cr = img.data
    r = y + 2.0 * (1.0 - _KR) * cr
    b = y + 2.0 * (1.0 - _KB) * cb
    g = (y - _KR * r - _KB * b) / _KG
    return Image(np.stack([r, g, b]))
