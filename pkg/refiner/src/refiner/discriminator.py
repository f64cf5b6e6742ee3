"""Paired multiscale discriminator.

One patch-style convolutional tower per input scale i in 1..3; each tower
consumes the candidate image concatenated with the aligned frame (both
downsampled externally to scale i) and emits a prediction map after each of
its i stages, giving the (i, j) output pyramid with sum(i) = 6 maps total.

Channel widths: tower stage k maps to width * 2**k channels (width
default 16); stages are 4x4 stride-2 convs with instance norm (batch size
is 1 in training) and leaky ReLU; heads are 1x1 convs.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

LEVELS = 3


def _stage(cin: int, cout: int, norm: bool) -> nn.Sequential:
    layers: list[nn.Module] = [nn.Conv2d(cin, cout, 4, stride=2, padding=1)]
    if norm:
        layers.append(nn.InstanceNorm2d(cout))
    layers.append(nn.LeakyReLU(0.2))
    return nn.Sequential(*layers)


class PairedMultiscaleDiscriminator(nn.Module):
    def __init__(self, width: int = 16, levels: int = LEVELS):
        super().__init__()
        self.levels = levels
        self.towers = nn.ModuleList()
        self.heads = nn.ModuleList()
        for i in range(1, levels + 1):
            stages = nn.ModuleList()
            heads = nn.ModuleList()
            cin = 6
            for j in range(i):
                cout = width * (2 ** j)
                stages.append(_stage(cin, cout, norm=j > 0))
                heads.append(nn.Conv2d(cout, 1, 1))
                cin = cout
            self.towers.append(stages)
            self.heads.append(heads)

    def forward(self, candidate: torch.Tensor,
                aligned: torch.Tensor) -> list[torch.Tensor]:
        """Returns the flat list of D_ij maps, i outer, j inner."""
        maps = []
        for i in range(self.levels):
            scale = 0.5 ** i
            if i == 0:
                x = torch.cat([candidate, aligned], dim=1)
            else:
                x = torch.cat([
                    F.interpolate(candidate, scale_factor=scale, mode="bilinear",
                                  align_corners=False, recompute_scale_factor=False),
                    F.interpolate(aligned, scale_factor=scale, mode="bilinear",
                                  align_corners=False, recompute_scale_factor=False),
                ], dim=1)
            for stage, head in zip(self.towers[i], self.heads[i]):
                x = stage(x)
                maps.append(head(x))
        return maps
