"""Dataset access for the dual-camera synthetic layout.

Reads `<dir>/<index>_{focused,defocused,gt}.png` triples written by the
core toolkit.  The aligned frame defaults to the defocused one (the image
dataset is perfectly aligned by construction); pass an aligned directory of
pipeline outputs to train with real alignment results instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
import torch


def _load(path: Path) -> torch.Tensor:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileNotFoundError(f"cannot read {path}")
    scale = 65535.0 if raw.dtype == np.uint16 else 255.0
    arr = raw.astype(np.float32) / scale
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    arr = arr[..., 2::-1]  # BGR(A) -> RGB
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))


def save_png(img: torch.Tensor, path) -> None:
    arr = img.detach().clamp(0, 1).cpu().numpy()
    q = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    bgr = q[::-1].transpose(1, 2, 0)
    if not cv2.imwrite(str(path), np.ascontiguousarray(bgr)):
        raise OSError(f"cannot write {path}")


@dataclass
class Sample:
    focused: torch.Tensor
    aligned: torch.Tensor
    gt: torch.Tensor
    index: int


class TripleDataset:
    def __init__(self, data_dir, aligned_dir=None):
        self.dir = Path(data_dir)
        self.aligned_dir = Path(aligned_dir) if aligned_dir else None
        self.files = sorted(self.dir.glob("*_focused.png"))
        if not self.files:
            raise FileNotFoundError(f"no *_focused.png in {self.dir}")
        if self.aligned_dir is not None:
            self.aligned_files = sorted(self.aligned_dir.glob("*.png"))
            if len(self.aligned_files) != len(self.files):
                raise ValueError("aligned frame count does not match dataset")

    def __len__(self):
        return len(self.files)

    def __getitem__(self, i: int) -> Sample:
        f = self.files[i]
        gt = self.dir / f.name.replace("_focused", "_gt")
        if self.aligned_dir is not None:
            aligned = self.aligned_files[i]
        else:
            aligned = self.dir / f.name.replace("_focused", "_defocused")
        return Sample(focused=_load(f), aligned=_load(aligned),
                      gt=_load(gt), index=i)


def random_crop(sample: Sample, size: int, gen: torch.Generator) -> Sample:
    """One crop window applied identically to all three images."""
    _, h, w = sample.focused.shape
    if h < size or w < size:
        raise ValueError(f"frames {w}x{h} smaller than crop {size}")
    y = int(torch.randint(0, h - size + 1, (1,), generator=gen))
    x = int(torch.randint(0, w - size + 1, (1,), generator=gen))
    box = (slice(None), slice(y, y + size), slice(x, x + size))
    return Sample(focused=sample.focused[box], aligned=sample.aligned[box],
                  gt=sample.gt[box], index=sample.index)
