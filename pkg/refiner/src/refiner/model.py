"""Demoireing generator: a 3-level encoder-decoder whose levels combine a
dilated residual dense block with a scale-aware aggregation module.

Input is the 6-channel concatenation of the focused frame and the aligned
defocused frame; the decoder emits residual-corrected images at three
scales (full, 1/2, 1/4), each the correspondingly downsampled focused frame
plus a learned correction.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

LEVELS = 3


class DilatedResidualDenseBlock(nn.Module):
    """Three dilated 3x3 convs (dilation 1, 2, 3) with dense connections,
    fused by a 1x1 conv and added back to the input."""

    def __init__(self, channels: int, growth: int | None = None):
        super().__init__()
        g = growth or channels
        self.convs = nn.ModuleList()
        for i, dil in enumerate((1, 2, 3)):
            self.convs.append(nn.Conv2d(channels + i * g, g, 3,
                                        padding=dil, dilation=dil))
        self.fuse = nn.Conv2d(channels + 3 * g, channels, 1)

    def forward(self, x):
        feats = x
        for conv in self.convs:
            feats = torch.cat([feats, F.leaky_relu(conv(feats), 0.2)], dim=1)
        return x + self.fuse(feats)


class ScaleAwareModule(nn.Module):
    """Pyramid-pooled context branches with learned per-branch gates."""

    def __init__(self, channels: int, scales=(1, 2, 4)):
        super().__init__()
        self.scales = scales
        self.branches = nn.ModuleList(
            nn.Conv2d(channels, channels, 3, padding=1) for _ in scales)
        self.gate = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Conv2d(channels, len(scales), 1),
            nn.Softmax(dim=1),
        )
        self.fuse = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        h, w = x.shape[-2:]
        gates = self.gate(x)
        mixed = 0.0
        for i, (s, conv) in enumerate(zip(self.scales, self.branches)):
            y = x if s == 1 else F.avg_pool2d(x, s)
            y = F.leaky_relu(conv(y), 0.2)
            if s != 1:
                y = F.interpolate(y, size=(h, w), mode="bilinear",
                                  align_corners=False)
            mixed = mixed + gates[:, i: i + 1] * y
        return x + self.fuse(mixed)


class LevelBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.drdb = DilatedResidualDenseBlock(channels)
        self.sam = ScaleAwareModule(channels)

    def forward(self, x):
        return self.sam(self.drdb(x))


class Generator(nn.Module):
    """outputs[i] has the input's spatial size divided by 2**i."""

    def __init__(self, width: int = 16):
        super().__init__()
        w = width
        self.stem = nn.Conv2d(6, w, 3, padding=1)
        self.enc1 = LevelBlock(w)
        self.down1 = nn.Conv2d(w, 2 * w, 3, stride=2, padding=1)
        self.enc2 = LevelBlock(2 * w)
        self.down2 = nn.Conv2d(2 * w, 4 * w, 3, stride=2, padding=1)
        self.enc3 = LevelBlock(4 * w)
        self.dec3 = LevelBlock(4 * w)
        self.up2 = nn.Conv2d(4 * w, 2 * w, 3, padding=1)
        self.dec2 = LevelBlock(2 * w)
        self.up1 = nn.Conv2d(2 * w, w, 3, padding=1)
        self.dec1 = LevelBlock(w)
        self.head3 = nn.Conv2d(4 * w, 3, 3, padding=1)
        self.head2 = nn.Conv2d(2 * w, 3, 3, padding=1)
        self.head1 = nn.Conv2d(w, 3, 3, padding=1)

    def forward(self, focused: torch.Tensor, aligned: torch.Tensor) -> list[torch.Tensor]:
        x = torch.cat([focused, aligned], dim=1)
        e1 = self.enc1(F.leaky_relu(self.stem(x), 0.2))
        e2 = self.enc2(F.leaky_relu(self.down1(e1), 0.2))
        e3 = self.enc3(F.leaky_relu(self.down2(e2), 0.2))

        d3 = self.dec3(e3)
        u2 = F.interpolate(d3, size=e2.shape[-2:], mode="bilinear",
                           align_corners=False)
        d2 = self.dec2(F.leaky_relu(self.up2(u2), 0.2) + e2)
        u1 = F.interpolate(d2, size=e1.shape[-2:], mode="bilinear",
                           align_corners=False)
        d1 = self.dec1(F.leaky_relu(self.up1(u1), 0.2) + e1)

        base1 = focused
        base2 = F.interpolate(focused, scale_factor=0.5, mode="bilinear",
                              align_corners=False)
        base3 = F.interpolate(focused, scale_factor=0.25, mode="bilinear",
                              align_corners=False)
        return [base1 + self.head1(d1),
                base2 + self.head2(F.interpolate(d2, size=base2.shape[-2:],
                                                 mode="bilinear", align_corners=False)),
                base3 + self.head3(F.interpolate(d3, size=base3.shape[-2:],
                                                 mode="bilinear", align_corners=False))]
