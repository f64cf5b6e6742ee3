"""Synthetic focused/defocused moire data generation.

A clean image is expanded into the screen's RGB subpixel mosaic, warped by a
random projective transform (screen pose vs. camera), optionally defocus
blurred, sampled through a Bayer color filter array, demosaiced, brightness
compensated, and resampled back to the source resolution.  The focused and
defocused branches share one homography, so every generated pair is
perfectly aligned with its ground truth.

Each sample is a pure function of (config seed, sample index): parameters
are drawn from a counter-based per-sample stream, so datasets regenerate
bit-exactly and generation parallelizes in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from dualmoire.imgcore import (
    Homography,
    Image,
    gaussian_blur,
    luma,
    save_png,
    warp_projective,
)


@dataclass(frozen=True)
class SynthConfig:
    focus_defocus_sigma_range: tuple[float, float] = (3.2, 4.0)
    foreground_sigma_range: tuple[float, float] = (2.0, 2.5)
    homography_corner_jitter: float = 0.05  # fraction of min(width, height)
    bayer_pattern: str = "RGGB"
    with_foreground: bool = False
    seed: int = 0
    # shared in-focus lens/sensor blur (pre-sampled mosaic pixels); tames the
    # subpixel carrier so the brightness gain restores mean luma without
    # clipping, while the low-frequency beat (the moire) survives
    optical_psf_sigma: float = 0.6
    # the 3x3 subpixel cell is ambiguous up to a rotation; "columns" means
    # vertical RGB stripes (three identical rows of [R, G, B])
    subpixel_layout: str = "columns"
    gain_mode: str = "luma"  # or "per-channel"

    def __post_init__(self):
        for name in ("focus_defocus_sigma_range", "foreground_sigma_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must satisfy 0 < low <= high, got ({lo}, {hi})")
        if not (0.0 <= self.homography_corner_jitter <= 0.25):
            raise ValueError("homography_corner_jitter must be in [0, 0.25]")
        if self.bayer_pattern != "RGGB":
            raise ValueError(f"unsupported Bayer pattern {self.bayer_pattern!r}")
        if self.subpixel_layout not in ("columns", "rows"):
            raise ValueError(f"subpixel_layout must be 'columns' or 'rows'")
        if self.gain_mode not in ("luma", "per-channel"):
            raise ValueError("gain_mode must be 'luma' or 'per-channel'")
        if self.optical_psf_sigma < 0:
            raise ValueError("optical_psf_sigma must be >= 0")


@dataclass(frozen=True)
class VideoSynthConfig:
    base: SynthConfig = field(default_factory=SynthConfig)
    frame_count: int = 8
    translation_range: tuple[float, float] = (5.0, 20.0)

    def __post_init__(self):
        if self.frame_count < 2:
            raise ValueError("frame_count must be >= 2")
        lo, hi = self.translation_range
        if not (5.0 <= lo <= hi <= 20.0):
            raise ValueError(f"translation_range must lie within [5, 20], got ({lo}, {hi})")


@dataclass(frozen=True)
class SyntheticSample:
    focused: Image
    defocused: Image
    gt: Image
    homography: Homography
    sigma_defocus: float
    sigma_foreground: float
    seed: int
    index: int
    translation: float = 0.0


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based per-sample stream; independent of generation order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, index, 0))))


def _video_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 0, 1))))


# ---------------------------------------------------------------------------
# Chain stages


def subpixel_mosaic(gt: Image, layout: str = "columns") -> Image:
    """Expand each pixel to a 3x3 emitter cell: one RGB stripe per cell.

    With the default column layout, cell column 0 carries the R value in the
    R plane, column 1 the G value, column 2 the B value; everything else is
    dark, like the unlit area between screen subpixels.
    """
    if gt.channels != 3:
        raise ValueError(f"subpixel mosaic needs RGB input, got {gt.channels} channels")
    h3, w3 = gt.height * 3, gt.width * 3
    up = np.repeat(np.repeat(gt.data, 3, axis=1), 3, axis=2)
    out = np.zeros_like(up)
    for c in range(3):
        if layout == "columns":
            out[c, :, c::3] = up[c, :, c::3]
        else:
            out[c, c::3, :] = up[c, c::3, :]
    return Image(out)


def box_downsample3(img: Image) -> Image:
    """Average each 3x3 cell; models the pixel-footprint integration that
    takes the sensor-resolution image back to the source grid."""
    c, h, w = img.data.shape
    if h % 3 or w % 3:
        raise ValueError(f"dimensions must be divisible by 3, got {w}x{h}")
    r = img.data.reshape(c, h // 3, 3, w // 3, 3)
    return Image(r.mean(axis=(2, 4)))


def random_homography(rng: np.random.Generator, jitter: float,
                      w: int, h: int) -> Homography:
    """Perturb the image rectangle's corners and solve the exact 4-point map.

    Offsets are uniform within +-jitter*min(w, h) per coordinate.  Degenerate
    (collinear) corner draws are resampled up to 8 times.
    """
    if jitter < 0:
        raise ValueError("jitter must be >= 0")
    src = np.array([[0.0, 0.0], [w - 1.0, 0.0], [w - 1.0, h - 1.0], [0.0, h - 1.0]])
    amp = jitter * min(w, h)
    for _ in range(8):
        dst = src + rng.uniform(-amp, amp, size=(4, 2))
        if _corners_degenerate(dst):
            continue
        try:
            return _solve_dlt(src, dst)
        except (np.linalg.LinAlgError, ValueError):
            continue
    raise ValueError("could not draw a non-degenerate homography in 8 attempts")


def _corners_degenerate(pts: np.ndarray) -> bool:
    # any three collinear corners make the 4-point problem singular
    for i in range(4):
        a, b, c = pts[i], pts[(i + 1) % 4], pts[(i + 2) % 4]
        area2 = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        if area2 < 1e-9:
            return True
    return False


def _solve_dlt(src: np.ndarray, dst: np.ndarray) -> Homography:
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i in range(4):
        x, y = src[i]
        u, v = dst[i]
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i] = u
        b[2 * i + 1] = v
    sol = np.linalg.solve(a, b)
    return Homography(np.append(sol, 1.0).reshape(3, 3))


def bayer_sample(img: Image) -> Image:
    """RGGB mosaic: even/even <- R, even/odd and odd/even <- G, odd/odd <- B."""
    if img.channels != 3:
        raise ValueError(f"bayer_sample needs RGB input, got {img.channels} channels")
    r, g, b = img.data
    raw = np.empty((img.height, img.width))
    raw[0::2, 0::2] = r[0::2, 0::2]
    raw[0::2, 1::2] = g[0::2, 1::2]
    raw[1::2, 0::2] = g[1::2, 0::2]
    raw[1::2, 1::2] = b[1::2, 1::2]
    return Image(raw)


# Gradient-corrected linear interpolation stencils (x8).  _CROSS recovers G
# at R/B sites; _AXIS_H recovers the color whose known neighbors sit in the
# same row, _AXIS_V its transpose; _DIAG recovers R at B sites and B at R.
_CROSS = np.array([
    [0, 0, -1, 0, 0],
    [0, 0, 2, 0, 0],
    [-1, 2, 4, 2, -1],
    [0, 0, 2, 0, 0],
    [0, 0, -1, 0, 0],
]) / 8.0
_AXIS_H = np.array([
    [0, 0, 0.5, 0, 0],
    [0, -1, 0, -1, 0],
    [-1, 4, 5, 4, -1],
    [0, -1, 0, -1, 0],
    [0, 0, 0.5, 0, 0],
]) / 8.0
_AXIS_V = _AXIS_H.T
_DIAG = np.array([
    [0, 0, -1.5, 0, 0],
    [0, 2, 0, 2, 0],
    [-1.5, 0, 6, 0, -1.5],
    [0, 2, 0, 2, 0],
    [0, 0, -1.5, 0, 0],
]) / 8.0


def demosaic(mosaic: Image, pattern: str = "RGGB") -> Image:
    """Gradient-corrected linear demosaicing with 2-pixel mirror borders.

    The mirror is the parity-preserving kind (edge not repeated), so the
    padded border keeps a consistent Bayer phase.  Output is clamped to
    [0, 1].
    """
    if pattern != "RGGB":
        raise ValueError(f"unsupported Bayer pattern {pattern!r}")
    if mosaic.channels != 1:
        raise ValueError("demosaic expects a single-channel mosaic")
    h, w = mosaic.height, mosaic.width
    if h % 2 or w % 2 or h < 4 or w < 4:
        raise ValueError(f"mosaic dimensions must be even and >= 4, got {w}x{h}")
    raw = mosaic.data[0]
    conv = {name: ndimage.correlate(raw, k, mode="mirror")
            for name, k in (("cross", _CROSS), ("axis_h", _AXIS_H),
                            ("axis_v", _AXIS_V), ("diag", _DIAG))}

    ys, xs = np.mgrid[0:h, 0:w]
    at_r = (ys % 2 == 0) & (xs % 2 == 0)
    at_gr = (ys % 2 == 0) & (xs % 2 == 1)  # green pixel in an R row
    at_gb = (ys % 2 == 1) & (xs % 2 == 0)  # green pixel in a B row
    at_b = (ys % 2 == 1) & (xs % 2 == 1)

    r = np.where(at_r, raw,
                 np.where(at_gr, conv["axis_h"],
                          np.where(at_gb, conv["axis_v"], conv["diag"])))
    g = np.where(at_r | at_b, conv["cross"], raw)
    b = np.where(at_b, raw,
                 np.where(at_gb, conv["axis_h"],
                          np.where(at_gr, conv["axis_v"], conv["diag"])))
    return Image(np.clip(np.stack([r, g, b]), 0.0, 1.0))


def brightness_compensate(img: Image, ref: Image, mode: str = "luma") -> Image:
    """Scale img so its mean brightness matches ref, then clamp to [0, 1]."""
    if (img.height, img.width) != (ref.height, ref.width):
        raise ValueError("img and ref must share dimensions")
    if mode == "luma":
        gain = float(np.mean(luma(ref))) / max(float(np.mean(luma(img))), 1e-6)
        return Image(np.clip(img.data * gain, 0.0, 1.0))
    gains = [float(np.mean(ref.data[c])) / max(float(np.mean(img.data[c])), 1e-6)
             for c in range(img.channels)]
    out = np.stack([np.clip(img.data[c] * gains[c], 0.0, 1.0)
                    for c in range(img.channels)])
    return Image(out)


def composite_foreground(bg: Image, fg: Image, alpha: Image,
                         blur_sigma: float | None = None) -> Image:
    """Matte fg over bg; when blur_sigma is set, fg and its matte are both
    blurred first (the defocused camera blurs the foreground too)."""
    if bg.data.shape != fg.data.shape:
        raise ValueError("background and foreground must share dimensions")
    if alpha.channels != 1 or (alpha.height, alpha.width) != (bg.height, bg.width):
        raise ValueError("alpha must be a single-channel image matching the frames")
    if np.min(alpha.data) < 0 or np.max(alpha.data) > 1:
        raise ValueError("alpha values must lie in [0, 1]")
    if blur_sigma is not None:
        fg = gaussian_blur(fg, blur_sigma)
        alpha = gaussian_blur(alpha, blur_sigma)
    a = alpha.data[0]
    return Image(fg.data * a + bg.data * (1.0 - a))


# ---------------------------------------------------------------------------
# Full sample generation


def _pad_margin(jitter: float, w: int, h: int) -> int:
    # margin (in gt pixels) so the warp never samples past the padded screen;
    # clamp-to-edge over the striped mosaic would replicate lit columns into
    # bright bands that the brightness gain then clips
    return int(np.ceil(1.5 * jitter * min(w, h))) + 4


def _screen_capture(gt: Image, h: Homography, cfg: SynthConfig,
                    defocus_sigma: float | None, margin: int) -> Image:
    """One camera branch: pad -> mosaic -> warp -> psf -> (defocus) -> CFA ->
    demosaic -> downsample -> crop -> brightness compensation.

    The ground truth is mirror-padded first, playing the part of the screen
    extending beyond the camera crop, and the margin is cut away again after
    the downsample.
    """
    padded = Image(np.pad(gt.data, ((0, 0), (margin, margin), (margin, margin)),
                          mode="symmetric"))
    mosaic = subpixel_mosaic(padded, cfg.subpixel_layout)
    warped = warp_projective(mosaic, h, mosaic.width, mosaic.height)
    if cfg.optical_psf_sigma > 0:
        warped = gaussian_blur(warped, cfg.optical_psf_sigma)
    if defocus_sigma is not None:
        warped = gaussian_blur(warped, defocus_sigma)
    rgb = demosaic(bayer_sample(warped))
    rgb = box_downsample3(rgb)
    core = Image(rgb.data[:, margin: margin + gt.height, margin: margin + gt.width])
    return brightness_compensate(core, gt, cfg.gain_mode)


def synth_pair(gt: Image, fg: tuple[Image, Image] | None, cfg: SynthConfig,
               sample_index: int) -> SyntheticSample:
    """Generate one focused/defocused/gt triple.

    Both branches share the homography drawn for this sample; the defocused
    branch adds a Gaussian defocus before CFA sampling and blurs the optional
    foreground.  Deterministic in (cfg.seed, sample_index).
    """
    if gt.channels != 3:
        raise ValueError("ground truth must be RGB")
    rng = sample_rng(cfg.seed, sample_index)
    margin = _pad_margin(cfg.homography_corner_jitter, gt.width, gt.height)
    h = random_homography(rng, cfg.homography_corner_jitter,
                          (gt.width + 2 * margin) * 3, (gt.height + 2 * margin) * 3)
    sigma_d = float(rng.uniform(*cfg.focus_defocus_sigma_range))
    sigma_f = float(rng.uniform(*cfg.foreground_sigma_range))

    focused = _screen_capture(gt, h, cfg, None, margin)
    defocused = _screen_capture(gt, h, cfg, sigma_d, margin)
    if fg is not None:
        fg_img, fg_alpha = fg
        focused = composite_foreground(focused, fg_img, fg_alpha)
        defocused = composite_foreground(defocused, fg_img, fg_alpha, blur_sigma=sigma_f)
    return SyntheticSample(focused=focused, defocused=defocused, gt=gt,
                           homography=h, sigma_defocus=sigma_d,
                           sigma_foreground=sigma_f, seed=cfg.seed,
                           index=sample_index)


def synth_video(gt_frames: Sequence[Image], cfg: VideoSynthConfig) -> list[SyntheticSample]:
    """Constant-translation video variant: the screen stays put, the camera
    pans by a per-video translation drawn once from the configured range.

    Frame t uses T(t * delta, 0) composed with the video's base homography;
    the defocus sigma is also drawn once and held across frames.
    """
    if len(gt_frames) == 0:
        raise ValueError("synth_video needs at least one frame")
    if len(gt_frames) < 2:
        raise ValueError("a video needs at least 2 frames")
    base = gt_frames[0]
    rng = _video_rng(cfg.base.seed)
    # pad for the worst-case cumulative pan so late frames never sample past
    # the padded screen; translation units are pre-sampled mosaic pixels
    margin = (_pad_margin(cfg.base.homography_corner_jitter, base.width, base.height)
              + int(np.ceil((cfg.frame_count - 1) * cfg.translation_range[1] / 3.0)))
    h0 = random_homography(rng, cfg.base.homography_corner_jitter,
                           (base.width + 2 * margin) * 3, (base.height + 2 * margin) * 3)
    sigma_d = float(rng.uniform(*cfg.base.focus_defocus_sigma_range))
    sigma_f = float(rng.uniform(*cfg.base.foreground_sigma_range))
    delta = float(rng.uniform(*cfg.translation_range))

    samples = []
    for t, gt in enumerate(gt_frames):
        if gt.channels != 3:
            raise ValueError("ground truth frames must be RGB")
        ht = Homography.translation(t * delta, 0.0).compose(h0)
        focused = _screen_capture(gt, ht, cfg.base, None, margin)
        defocused = _screen_capture(gt, ht, cfg.base, sigma_d, margin)
        samples.append(SyntheticSample(
            focused=focused, defocused=defocused, gt=gt, homography=ht,
            sigma_defocus=sigma_d, sigma_foreground=sigma_f,
            seed=cfg.base.seed, index=t, translation=delta))
    return samples


# ---------------------------------------------------------------------------
# Procedural ground-truth cards, dataset layout, manifest

_CARD_KINDS = 8


def make_test_card(index: int, width: int = 128, height: int = 128,
              achromatic: bool = False, seed: int = 0) -> Image:
    """Deterministic procedural ground truth: ramps, gratings, checkers,
    disks, and smooth gradients.  Mid-tone biased so the synthesis chain's
    brightness gain rarely clips."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, index, 2))))
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    xn = xs / max(width - 1, 1)
    yn = ys / max(height - 1, 1)
    kind = index % _CARD_KINDS
    if kind == 0:
        base = xn
    elif kind == 1:
        base = yn
    elif kind == 2:
        base = 0.5 * (xn + yn)
    elif kind == 3:
        freq = rng.uniform(1.0, 4.0)
        ang = rng.uniform(0.0, np.pi)
        base = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (xn * np.cos(ang) + yn * np.sin(ang)))
    elif kind == 4:
        cell = int(rng.integers(8, 24))
        base = (((xs // cell) + (ys // cell)) % 2).astype(np.float64)
    elif kind == 5:
        cx, cy = rng.uniform(0.25, 0.75, size=2)
        rr = np.hypot(xn - cx, yn - cy)
        base = 0.5 + 0.5 * np.cos(2 * np.pi * rng.uniform(2.0, 5.0) * rr)
    elif kind == 6:
        corners = rng.uniform(0.0, 1.0, size=4)
        base = (corners[0] * (1 - xn) * (1 - yn) + corners[1] * xn * (1 - yn)
                + corners[2] * (1 - xn) * yn + corners[3] * xn * yn)
    else:
        noise = rng.random((height // 8 + 2, width // 8 + 2))
        gx = xs / 8.0
        gy = ys / 8.0
        from dualmoire.imgcore import sample_bilinear

        base = sample_bilinear(noise, gx, gy)
    # peak near 0.62: the synthesis gain (~3x) amplifies moire beats, and a
    # mid-tone palette keeps the compensated result inside [0, 1]
    base = 0.08 + 0.54 * np.clip(base, 0.0, 1.0)
    if achromatic:
        return Image(np.stack([base, base, base]))
    tint = rng.uniform(0.7, 1.0, size=3)
    return Image(np.stack([np.clip(base * tint[c], 0.0, 1.0) for c in range(3)]))


def manifest_line(s: SyntheticSample) -> str:
    hvals = ",".join(repr(float(v)) for v in s.homography.matrix.ravel())
    return (f"index={s.index:05d} seed={s.seed} width={s.gt.width} "
            f"height={s.gt.height} sigma_defocus={s.sigma_defocus!r} "
            f"sigma_foreground={s.sigma_foreground!r} "
            f"translation={s.translation!r} homography={hvals}")


def parse_manifest(path) -> list[dict]:
    entries = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rec = {}
        for tok in line.split():
            key, _, val = tok.partition("=")
            rec[key] = val
        rec["index"] = int(rec["index"])
        for k in ("sigma_defocus", "sigma_foreground", "translation"):
            rec[k] = float(rec[k])
        rec["homography"] = np.array([float(v) for v in rec["homography"].split(",")]).reshape(3, 3)
        entries.append(rec)
    return entries


def write_sample(s: SyntheticSample, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_png(s.focused, out / f"{s.index:05d}_focused.png")
    save_png(s.defocused, out / f"{s.index:05d}_defocused.png")
    save_png(s.gt, out / f"{s.index:05d}_gt.png")


def write_dataset(samples: Iterable[SyntheticSample], out_dir) -> Path:
    """Write numbered PNG triples plus the line-oriented manifest; returns
    the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for s in samples:
        write_sample(s, out)
        lines.append(manifest_line(s))
    manifest = out / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest
