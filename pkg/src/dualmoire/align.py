"""Alignment step: optical-flow warping of the defocused frame plus
forward-backward occlusion masking, and the composite that fills occluded
pixels from the focused frame.

Flow convention: a field F aligned with frame A backward-warps frame B onto
A's grid, i.e. warped(p) = B(p + F(p)).  The consistency check additionally
needs the reverse field (aligned with B, pointing into A).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from dualmoire.imgcore import Image, gaussian_blur, luma, sample_bilinear

FLO_MAGIC = 202021.25


class FloFormatError(ValueError):
    """Middlebury .flo file is malformed (bad magic or truncated payload)."""


@dataclass(frozen=True)
class FlowField:
    """Dense displacement field, shape (height, width, 2) float32, (u, v) order."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float32)
        if d.ndim != 3 or d.shape[2] != 2:
            raise ValueError(f"flow must be (h, w, 2), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("flow components must be finite")
        d = np.ascontiguousarray(d)
        d.flags.writeable = False
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def u(self) -> np.ndarray:
        return self.data[..., 0]

    @property
    def v(self) -> np.ndarray:
        return self.data[..., 1]

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        return cls(np.zeros((height, width, 2), dtype=np.float32))


@dataclass(frozen=True)
class OcclusionMask:
    """Per-pixel validity: 1 = flow-consistent (non-occluded), 0 = occluded."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2:
            raise ValueError(f"mask must be 2-D, got {d.shape}")
        if not np.all((d == 0) | (d == 1)):
            raise ValueError("mask values must be 0 or 1")
        d = np.ascontiguousarray(d.astype(np.uint8))
        d.flags.writeable = False
        object.__setattr__(self, "data", d)


def load_flo(path) -> FlowField:
    """Read a Middlebury .flo file (magic float, int32 w/h, float32 u,v pairs)."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such flow file: {p}")
    blob = p.read_bytes()
    if len(blob) < 12:
        raise FloFormatError(f"truncated .flo header: {p}")
    magic, w, h = struct.unpack("<fii", blob[:12])
    if magic != FLO_MAGIC:
        raise FloFormatError(f"bad .flo magic {magic!r} in {p}")
    if w <= 0 or h <= 0:
        raise FloFormatError(f"bad .flo dimensions {w}x{h} in {p}")
    expect = 12 + 8 * w * h
    if len(blob) < expect:
        raise FloFormatError(f"truncated .flo payload in {p}: {len(blob)} < {expect}")
    data = np.frombuffer(blob, dtype="<f4", count=2 * w * h, offset=12)
    return FlowField(data.reshape(h, w, 2))


def save_flo(field: FlowField, path) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack("<fii", FLO_MAGIC, field.width, field.height))
        f.write(np.ascontiguousarray(field.data, dtype="<f4").tobytes())


def backward_warp(img: Image, flow: FlowField) -> Image:
    """out(p) = img(p + flow(p)), bilinear, clamp-to-edge outside."""
    if (flow.height, flow.width) != (img.height, img.width):
        raise ValueError(
            f"flow {flow.width}x{flow.height} does not match image {img.width}x{img.height}")
    xs, ys = np.meshgrid(np.arange(img.width, dtype=np.float64),
                         np.arange(img.height, dtype=np.float64))
    sx = xs + flow.u
    sy = ys + flow.v
    out = np.empty_like(img.data)
    for c in range(img.channels):
        out[c] = sample_bilinear(img.data[c], sx, sy)
    return Image(out)


def occlusion_mask(fwd: FlowField, bwd: FlowField,
                   alpha: float = 0.01, beta: float = 0.5) -> OcclusionMask:
    """Forward-backward consistency: p is valid iff
    |fwd(p) + bwd(p + fwd(p))|^2 <= alpha * (|fwd(p)|^2 + |bwd(p+fwd(p))|^2) + beta.
    """
    if fwd.data.shape != bwd.data.shape:
        raise ValueError("forward and backward fields must share dimensions")
    h, w = fwd.height, fwd.width
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    sx = xs + fwd.u
    sy = ys + fwd.v
    bu = sample_bilinear(bwd.u.astype(np.float64), sx, sy)
    bv = sample_bilinear(bwd.v.astype(np.float64), sx, sy)
    res = (fwd.u + bu) ** 2 + (fwd.v + bv) ** 2
    bound = alpha * (fwd.u ** 2 + fwd.v ** 2 + bu ** 2 + bv ** 2) + beta
    return OcclusionMask((res <= bound).astype(np.uint8))


def composite_aligned(warped_d: Image, focused: Image, mask: OcclusionMask) -> Image:
    """Pointwise warped*M + focused*(1-M); occluded pixels fall back to focused."""
    if warped_d.data.shape != focused.data.shape:
        raise ValueError("warped and focused frames must share dimensions")
    if mask.data.shape != (focused.height, focused.width):
        raise ValueError("mask dimensions do not match frames")
    m = mask.data.astype(np.float64)
    return Image(warped_d.data * m + focused.data * (1.0 - m))


# ---------------------------------------------------------------------------
# Coarse-to-fine block matching (desk-scale stand-in for a learned flow model)


def _box_down2(a: np.ndarray) -> np.ndarray:
    h, w = a.shape
    a = a[: h - (h % 2), : w - (w % 2)]
    return 0.25 * (a[0::2, 0::2] + a[0::2, 1::2] + a[1::2, 0::2] + a[1::2, 1::2])


def _shift_clamped(padded: np.ndarray, pad: int, dy: int, dx: int,
                   h: int, w: int) -> np.ndarray:
    return padded[pad + dy: pad + dy + h, pad + dx: pad + dx + w]


def _block_field(a: np.ndarray, b: np.ndarray, init: np.ndarray,
                 radius: int, block: int) -> np.ndarray:
    """Integer displacement per block minimizing zero-mean SSD; ties go to
    the smallest displacement (then smallest v, then u), so constant or
    pure-gradient blocks give zeros.

    Subtracting the per-block mean difference makes the cost invariant to
    local brightness offsets between the two frames, which a focused /
    defocused pair always has."""
    h, w = a.shape
    nby, nbx = h // block, w // block
    n = block * block
    ac = a[: nby * block, : nbx * block]
    best_ssd = np.full((nby, nbx), np.inf)
    best = np.zeros((nby, nbx, 2), dtype=np.float64)

    max_shift = int(np.max(np.abs(init))) + radius + 1
    padded = np.pad(b, max_shift, mode="edge")

    init_int = np.rint(init).astype(np.int64)
    flat = init_int.reshape(-1, 2)
    for iu, iv in np.unique(flat, axis=0):
        sel = (init_int[..., 0] == iu) & (init_int[..., 1] == iv)
        cand = [(iu + du, iv + dv)
                for dv in range(-radius, radius + 1)
                for du in range(-radius, radius + 1)]
        cand.sort(key=lambda d: (d[0] * d[0] + d[1] * d[1], d[1], d[0]))
        for du, dv in cand:
            shifted = _shift_clamped(padded, max_shift, dv, du, h, w)
            diff = ac - shifted[: nby * block, : nbx * block]
            tiles = diff.reshape(nby, block, nbx, block)
            ssd = (tiles ** 2).sum(axis=(1, 3)) - tiles.sum(axis=(1, 3)) ** 2 / n
            # quantize so float noise cannot defeat the displacement tie-break
            ssd = np.round(ssd, 12)
            win = sel & (ssd < best_ssd)
            best_ssd[win] = ssd[win]
            best[win] = (du, dv)
    return best


def _median3(block_vals: np.ndarray) -> np.ndarray:
    """Component-wise 3x3 median over the block grid; removes isolated
    mismatched vectors without disturbing uniform or smoothly varying
    motion."""
    if block_vals.shape[0] < 3 or block_vals.shape[1] < 3:
        return block_vals
    out = np.empty_like(block_vals)
    for c in (0, 1):
        out[..., c] = ndimage.median_filter(block_vals[..., c], size=3,
                                            mode="nearest")
    return out


def _densify(block_vals: np.ndarray, out_h: int, out_w: int, block: int) -> np.ndarray:
    """Bilinear interpolation from block centers to a dense per-pixel field."""
    nby, nbx = block_vals.shape[:2]
    xs = (np.arange(out_w, dtype=np.float64) - (block - 1) / 2.0) / block
    ys = (np.arange(out_h, dtype=np.float64) - (block - 1) / 2.0) / block
    gx, gy = np.meshgrid(xs, ys)
    u = sample_bilinear(block_vals[..., 0], gx, gy)
    v = sample_bilinear(block_vals[..., 1], gx, gy)
    return np.stack([u, v], axis=-1)


def estimate_flow_blockmatch(a: Image, b: Image, levels: int = 4,
                             radius: int = 4, block: int = 8,
                             presmooth_sigma: float = 1.5) -> FlowField:
    """Coarse-to-fine SSD block matching from a to b (field aligned with a).

    Factor-2 pyramid with `levels` levels; each level searches +-radius
    around the upsampled coarse estimate; the block grid is bilinearly
    densified to per-pixel at the end.  Both frames are pre-smoothed so that
    appearance differences between them (a sharp, moire-patterned frame vs.
    a defocused one) cannot drive the SSD; blurring commutes with the
    displacement being estimated.
    """
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError("frames must share dimensions")
    if levels < 1 or radius < 0 or block < 1:
        raise ValueError("levels >= 1, radius >= 0, block >= 1 required")
    if min(a.height, a.width) < block * (1 << (levels - 1)):
        raise ValueError(
            f"image {a.width}x{a.height} too small for {levels} pyramid levels "
            f"with block {block}")

    if presmooth_sigma > 0:
        a = gaussian_blur(a, presmooth_sigma)
        b = gaussian_blur(b, presmooth_sigma)
    ga, gb = luma(a), luma(b)
    pyr = [(ga, gb)]
    for _ in range(levels - 1):
        ga, gb = _box_down2(ga), _box_down2(gb)
        pyr.append((ga, gb))

    field = None
    for la, lb in reversed(pyr):
        h, w = la.shape
        nby, nbx = h // block, w // block
        if field is None:
            init = np.zeros((nby, nbx, 2))
        else:
            centers_x = (np.arange(nbx) * block + (block - 1) / 2.0)
            centers_y = (np.arange(nby) * block + (block - 1) / 2.0)
            gx, gy = np.meshgrid(centers_x, centers_y)
            # previous level is half resolution: halve coords, double values
            init = np.stack([sample_bilinear(field[..., 0], gx / 2.0, gy / 2.0),
                             sample_bilinear(field[..., 1], gx / 2.0, gy / 2.0)],
                            axis=-1) * 2.0
        blocks = _median3(_block_field(la, lb, init, radius, block))
        field = _densify(blocks, h, w, block)

    return FlowField(field.astype(np.float32))
