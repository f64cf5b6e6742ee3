"""Export refined guide frames: run the generator over focused/aligned
pairs and write full-scale outputs as 8-bit PNG, consumable by the core
pipeline's guided mode."""

from __future__ import annotations

from pathlib import Path

import torch

from refiner.data import _load, save_png
from refiner.train import load_generator


def infer_dir(checkpoint, focused_dir, aligned_dir, out_dir,
              device: str = "cpu") -> list[Path]:
    gen = load_generator(checkpoint, device)
    focused_files = sorted(Path(focused_dir).glob("*.png"))
    aligned_files = sorted(Path(aligned_dir).glob("*.png"))
    if not focused_files:
        raise FileNotFoundError(f"no PNGs in {focused_dir}")
    if len(focused_files) != len(aligned_files):
        raise ValueError("focused/aligned frame counts differ")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with torch.no_grad():
        for f, a in zip(focused_files, aligned_files):
            focused = _load(f)[None].to(device)
            aligned = _load(a)[None].to(device)
            if focused.shape != aligned.shape:
                raise ValueError(f"shape mismatch for {f.name}")
            guide = gen(focused, aligned)[0][0].clamp(0, 1)
            dest = out / f.name
            save_png(guide, dest)
            written.append(dest)
    return written
