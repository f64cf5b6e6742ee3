"""Frozen perceptual feature extractor.

VGG16 convolutional architecture through relu3_3, with feature taps after
relu1_2, relu2_2 and relu3_3.  Pretrained ImageNet weights are loaded when
torchvision can provide them (e.g. from a local cache); otherwise the
extractor falls back to a fixed-seed random initialization so that the
loss stays deterministic and differentiable.  Parameters are frozen either
way.
"""

from __future__ import annotations

import logging

import torch
from torch import nn

log = logging.getLogger("refiner")

# conv widths of VGG16 blocks 1-3; taps sit after the last ReLU of each block
_CFG = [64, 64, "M", 128, 128, "M", 256, 256, 256]
_TAPS = (3, 8, 13)  # indices into the sequential module list, after ReLUs

_MEAN = (0.485, 0.456, 0.406)
_STD = (0.229, 0.224, 0.225)

_INIT_SEED = 0x5EED


def _build() -> nn.Sequential:
    layers: list[nn.Module] = []
    cin = 3
    for v in _CFG:
        if v == "M":
            layers.append(nn.MaxPool2d(2, 2))
        else:
            layers.append(nn.Conv2d(cin, v, 3, padding=1))
            layers.append(nn.ReLU(inplace=False))
            cin = v
    return nn.Sequential(*layers)


def _try_pretrained(net: nn.Sequential) -> bool:
    try:
        from torchvision.models import VGG16_Weights, vgg16

        full = vgg16(weights=VGG16_Weights.IMAGENET1K_V1)
        # identical layer layout and indexing over the first three blocks
        net.load_state_dict(full.features[: len(net)].state_dict())
        return True
    except Exception as e:  # no cache, no network
        log.warning("pretrained perceptual weights unavailable (%s); "
                    "using fixed-seed random features", type(e).__name__)
        return False


class FeatureExtractor(nn.Module):
    def __init__(self, pretrained: bool = True):
        super().__init__()
        self.net = _build()
        loaded = pretrained and _try_pretrained(self.net)
        if not loaded:
            gen = torch.Generator().manual_seed(_INIT_SEED)
            for m in self.net.modules():
                if isinstance(m, nn.Conv2d):
                    w = torch.empty_like(m.weight)
                    nn.init.kaiming_normal_(w, generator=gen)
                    with torch.no_grad():
                        m.weight.copy_(w)
                        m.bias.zero_()
        self.pretrained_loaded = loaded
        mean = torch.tensor(_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(_STD).view(1, 3, 1, 1)
        self.register_buffer("mean", mean)
        self.register_buffer("std", std)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True):
        # immutable during training regardless of the surrounding mode
        return super().train(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        feats = []
        for i, layer in enumerate(self.net):
            x = layer(x)
            if i in _TAPS:
                feats.append(x)
        return feats
