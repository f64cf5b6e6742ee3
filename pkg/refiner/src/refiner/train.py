"""Alternating generator/discriminator training on random crops.

Every step draws one sample and one crop window (shared by the focused,
aligned and ground-truth images), updates the discriminator on a
real/fake pair, then updates the generator with the full multi-term loss.

A JSONL log records the per-step loss components plus a `smoothed` total:
a running median over the last few steps (robust to the spikes that hard
samples cause at batch size 1) followed by an exponential moving average.
Checkpoints carry both networks, the optimizers, and the config.
"""

from __future__ import annotations

import json
import math
import statistics
import time
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from refiner.data import Sample, TripleDataset, random_crop
from refiner.discriminator import PairedMultiscaleDiscriminator
from refiner.features import FeatureExtractor
from refiner.losses import (
    LossWeights,
    downsample_pyramid,
    loss_adv_d,
    loss_adv_g,
    loss_consistency,
    loss_highfreq,
    loss_perceptual,
    total_loss,
)
from refiner.model import Generator

EMA_BETA = 0.98
MEDIAN_WINDOW = 9


@dataclass
class TrainConfig:
    data_dir: str
    out_dir: str
    aligned_dir: str | None = None
    steps: int = 2000
    crop: int = 256
    width: int = 16
    lr: float = 2e-4
    betas: tuple[float, float] = (0.9, 0.999)
    lam_p: float = 1.0
    lam_h: float = 0.1
    lam_a: float = 0.1
    seed: int = 0
    log_every: int = 1
    checkpoint_every: int = 0  # 0: only at the end
    device: str = "cpu"
    pretrained_features: bool = True


class Trainer:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.dataset = TripleDataset(cfg.data_dir, cfg.aligned_dir)
        self.gen = Generator(cfg.width).to(cfg.device)
        self.disc = PairedMultiscaleDiscriminator(cfg.width).to(cfg.device)
        self.features = FeatureExtractor(cfg.pretrained_features).to(cfg.device)
        self.weights = LossWeights(cfg.lam_p, cfg.lam_h, cfg.lam_a)
        self.opt_g = torch.optim.Adam(self.gen.parameters(), lr=cfg.lr,
                                      betas=cfg.betas)
        self.opt_d = torch.optim.Adam(self.disc.parameters(), lr=cfg.lr,
                                      betas=cfg.betas)
        self.crop_gen = torch.Generator().manual_seed(cfg.seed + 1)
        self.pick_gen = torch.Generator().manual_seed(cfg.seed + 2)
        self.step = 0
        self.ema = None
        self.recent = deque(maxlen=MEDIAN_WINDOW)
        self.history: list[dict] = []

    def _batch(self) -> Sample:
        i = int(torch.randint(0, len(self.dataset), (1,), generator=self.pick_gen))
        s = self.dataset[i]
        if min(s.focused.shape[-2:]) > self.cfg.crop:
            s = random_crop(s, self.cfg.crop, self.crop_gen)
        dev = self.cfg.device
        return Sample(focused=s.focused[None].to(dev),
                      aligned=s.aligned[None].to(dev),
                      gt=s.gt[None].to(dev), index=s.index)

    def train_step(self) -> dict:
        cfg = self.cfg
        s = self._batch()
        pyramid = self.gen(s.focused, s.aligned)
        i_r = pyramid[0]

        # discriminator first, on detached fakes
        if cfg.lam_a > 0:
            self.opt_d.zero_grad(set_to_none=True)
            d_real = self.disc(s.gt, s.aligned)
            d_fake = self.disc(i_r.detach(), s.aligned)
            d_loss = loss_adv_d(d_real, d_fake)
            d_loss.backward()
            self.opt_d.step()
        else:
            d_loss = torch.zeros(())

        self.opt_g.zero_grad(set_to_none=True)
        c = loss_consistency(i_r, s.gt)
        p = loss_perceptual(pyramid, s.gt, self.features)
        h = loss_highfreq(i_r, s.gt)
        if cfg.lam_a > 0:
            a = loss_adv_g(self.disc(i_r, s.aligned))
        else:
            a = torch.zeros((), device=i_r.device)
        g_loss = total_loss(c, p, h, a, self.weights)
        g_loss.backward()
        self.opt_g.step()

        total = float(g_loss.detach())
        parts = {k: float(v.detach()) for k, v in
                 (("consistency", c), ("perceptual", p), ("highfreq", h),
                  ("adversarial", a), ("d_loss", d_loss))}
        if not math.isfinite(total):
            raise RuntimeError(
                f"non-finite loss at step {self.step}: total={total} "
                f"{parts} sample={s.index}")
        self.recent.append(total)
        med = statistics.median(self.recent)
        self.ema = med if self.ema is None else (
            EMA_BETA * self.ema + (1 - EMA_BETA) * med)
        rec = {"step": self.step, "total": total, **parts, "smoothed": self.ema}
        self.step += 1
        return rec

    def run(self) -> Path:
        out = Path(self.cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / "loss_log.jsonl"
        t0 = time.time()
        with open(log_path, "w") as log:
            for _ in range(self.cfg.steps):
                rec = self.train_step()
                self.history.append(rec)
                if self.step % self.cfg.log_every == 0:
                    log.write(json.dumps(rec) + "\n")
                if (self.cfg.checkpoint_every
                        and self.step % self.cfg.checkpoint_every == 0):
                    self.save(out / f"checkpoint_{self.step:06d}.pt")
        ckpt = out / "checkpoint.pt"
        self.save(ckpt)
        elapsed = time.time() - t0
        with open(out / "train_summary.json", "w") as f:
            json.dump({"steps": self.step, "seconds": elapsed,
                       "final_smoothed": self.ema}, f)
        return ckpt

    def save(self, path) -> None:
        torch.save({
            "generator": self.gen.state_dict(),
            "discriminator": self.disc.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_d": self.opt_d.state_dict(),
            "config": asdict(self.cfg),
            "step": self.step,
        }, path)


def load_generator(checkpoint_path, device: str = "cpu") -> Generator:
    ckpt = torch.load(checkpoint_path, map_location=device, weights_only=False)
    gen = Generator(ckpt["config"]["width"]).to(device)
    gen.load_state_dict(ckpt["generator"])
    gen.eval()
    return gen
