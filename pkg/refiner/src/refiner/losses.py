"""Training losses: consistency (L1), multi-scale perceptual, FFT
high-frequency, and the paired adversarial terms.

The high-frequency distance uses the orthonormal 2-D FFT and averages the
absolute coefficient difference over all elements, matching the core
package's metric definition, so values agree across the two components on
shared fixtures.  Adversarial terms average each prediction map over its
own positions before summing the (input scale, output scale) pairs, which
keeps every map's contribution scale-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class LossWeights:
    lam_p: float = 1.0
    lam_h: float = 0.1
    lam_a: float = 0.1

    def __post_init__(self):
        if min(self.lam_p, self.lam_h, self.lam_a) < 0:
            raise ValueError("loss weights must be nonnegative")


def loss_consistency(i_r: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    return torch.mean(torch.abs(i_r - gt))


def downsample_pyramid(gt: torch.Tensor, levels: int = 3) -> list[torch.Tensor]:
    out = [gt]
    for i in range(1, levels):
        out.append(F.interpolate(gt, scale_factor=0.5 ** i, mode="bilinear",
                                 align_corners=False, recompute_scale_factor=False))
    return out


def loss_perceptual(pyramid: Sequence[torch.Tensor], gt: torch.Tensor,
                    extractor) -> torch.Tensor:
    """Sum over output levels of the L1 gap between feature taps."""
    gts = downsample_pyramid(gt, len(pyramid))
    total = pyramid[0].new_zeros(())
    for ir_i, gt_i in zip(pyramid, gts):
        if ir_i.shape[-2:] != gt_i.shape[-2:]:
            raise ValueError(f"pyramid/gt scale mismatch: {ir_i.shape} vs {gt_i.shape}")
        for fa, fb in zip(extractor(ir_i), extractor(gt_i)):
            total = total + torch.mean(torch.abs(fa - fb))
    return total


def loss_highfreq(i_r: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    fa = torch.fft.fft2(i_r, norm="ortho")
    fb = torch.fft.fft2(gt, norm="ortho")
    return torch.mean(torch.abs(fa - fb))


def loss_adv_g(d_maps: Sequence[torch.Tensor]) -> torch.Tensor:
    """Generator side: every map of the fake sample should look real (1)."""
    if not d_maps:
        raise ValueError("no discriminator maps")
    total = d_maps[0].new_zeros(())
    for m in d_maps:
        total = total + torch.mean(torch.abs(m - 1.0))
    return total


def loss_adv_d(real_maps: Sequence[torch.Tensor],
               fake_maps: Sequence[torch.Tensor]) -> torch.Tensor:
    """Discriminator side: real targets 1, fake targets 0."""
    if len(real_maps) != len(fake_maps) or not real_maps:
        raise ValueError("real/fake map sets must be equal-sized and non-empty")
    total = real_maps[0].new_zeros(())
    for r, f in zip(real_maps, fake_maps):
        total = total + torch.mean(torch.abs(r - 1.0)) + torch.mean(torch.abs(f))
    return total


def total_loss(consistency, perceptual, highfreq, adversarial,
               w: LossWeights = LossWeights()):
    return (consistency + w.lam_p * perceptual + w.lam_h * highfreq
            + w.lam_a * adversarial)
