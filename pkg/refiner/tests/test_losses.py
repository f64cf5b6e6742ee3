import math

import pytest
import torch

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


@pytest.fixture(scope="module")
def extractor():
    return FeatureExtractor(pretrained=False)


def test_consistency_cases(gen):
    x = torch.rand(1, 3, 8, 8, generator=gen)
    assert float(loss_consistency(x, x)) == 0.0
    ones = torch.ones(1, 3, 8, 8)
    zeros = torch.zeros(1, 3, 8, 8)
    assert float(loss_consistency(ones, zeros)) == 1.0


def test_highfreq_zero_and_dc_shift(gen):
    x = torch.rand(1, 3, 12, 9, generator=gen, dtype=torch.float64)
    assert float(loss_highfreq(x, x)) == 0.0
    c = 0.03
    got = float(loss_highfreq(x + c, x))
    assert got == pytest.approx(c / math.sqrt(12 * 9), rel=1e-9)


def test_perceptual_zero_for_identical(extractor, gen):
    gt = torch.rand(1, 3, 32, 32, generator=gen)
    pyr = downsample_pyramid(gt)
    assert float(loss_perceptual(pyr, gt, extractor)) == 0.0


def test_perceptual_additive_per_level(extractor, gen):
    gt = torch.rand(1, 3, 32, 32, generator=gen)
    clean = downsample_pyramid(gt)
    noisy1 = [clean[0] + 0.05, clean[1], clean[2]]
    base = float(loss_perceptual(clean, gt, extractor))
    only1 = float(loss_perceptual(noisy1, gt, extractor))
    # perturbing level 1 changes the total only through the level-1 term
    lvl1_delta = only1 - base
    noisy_both = [clean[0] + 0.05, clean[1] + 0.03, clean[2]]
    only2_delta = float(loss_perceptual([clean[0], clean[1] + 0.03, clean[2]],
                                        gt, extractor)) - base
    both = float(loss_perceptual(noisy_both, gt, extractor))
    assert both - base == pytest.approx(lvl1_delta + only2_delta, rel=1e-5)


def test_perceptual_scale_mismatch_rejected(extractor, gen):
    gt = torch.rand(1, 3, 32, 32, generator=gen)
    pyr = downsample_pyramid(gt)
    pyr[1] = torch.rand(1, 3, 9, 9, generator=gen)
    with pytest.raises(ValueError):
        loss_perceptual(pyr, gt, extractor)


def test_adv_g_map_counts():
    full = torch.ones(1, 1, 4, 4)
    maps = [full.clone() for _ in range(6)]
    assert float(loss_adv_g(maps)) == 0.0
    zeros = [torch.zeros(1, 1, 4, 4) for _ in range(6)]
    assert float(loss_adv_g(zeros)) == pytest.approx(6.0)
    half = torch.zeros(1, 1, 4, 4)
    half[..., :2] = 1.0
    assert float(loss_adv_g([half])) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        loss_adv_g([])


def test_adv_d_targets():
    real = [torch.ones(1, 1, 4, 4) for _ in range(6)]
    fake = [torch.zeros(1, 1, 4, 4) for _ in range(6)]
    assert float(loss_adv_d(real, fake)) == 0.0
    # completely fooled discriminator: 6 pairs, each contributing 1 + 1
    assert float(loss_adv_d(fake, real)) == pytest.approx(12.0)


def test_total_loss_weights():
    one = torch.ones(())
    zero = torch.zeros(())
    assert float(total_loss(zero, zero, zero, zero)) == 0.0
    assert float(total_loss(one, one, one, one)) == pytest.approx(2.2)
    no_adv = total_loss(one, one, one, one, LossWeights(lam_a=0.0))
    assert float(no_adv) == pytest.approx(2.1)
    with pytest.raises(ValueError):
        LossWeights(lam_p=-1.0)


# ---------------------------------------------------------------------------
# Gradient checks (finite differences, double precision)


def test_highfreq_gradient_finite_difference(gen):
    x = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64,
                   requires_grad=True)
    gt = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
    loss = loss_highfreq(x, gt)
    (grad,) = torch.autograd.grad(loss, x)
    eps = 1e-6
    fd = torch.zeros_like(grad)
    with torch.no_grad():
        flat = x.detach().clone().view(-1)
        for i in range(flat.numel()):
            orig = float(flat[i])
            flat[i] = orig + eps
            hi = float(loss_highfreq(flat.view_as(x), gt))
            flat[i] = orig - eps
            lo = float(loss_highfreq(flat.view_as(x), gt))
            flat[i] = orig
            fd.view(-1)[i] = (hi - lo) / (2 * eps)
    rel = float(torch.norm(fd - grad) / torch.norm(grad))
    assert rel <= 1e-3


def test_perceptual_gradient_finite_difference(gen):
    ext = FeatureExtractor(pretrained=False).double()
    x = torch.rand(1, 3, 32, 32, generator=gen, dtype=torch.float64,
                   requires_grad=True)
    gt = torch.rand(1, 3, 32, 32, generator=gen, dtype=torch.float64)
    pyr = [x, downsample_pyramid(gt)[1], downsample_pyramid(gt)[2]]
    loss = loss_perceptual(pyr, gt, ext)
    (grad,) = torch.autograd.grad(loss, x)
    eps = 1e-5
    with torch.no_grad():
        for trial in range(3):
            v = torch.randn(x.shape, generator=gen, dtype=torch.float64)
            v /= torch.norm(v)
            hi = float(loss_perceptual([x.detach() + eps * v,
                                        downsample_pyramid(gt)[1],
                                        downsample_pyramid(gt)[2]], gt, ext))
            lo = float(loss_perceptual([x.detach() - eps * v,
                                        downsample_pyramid(gt)[1],
                                        downsample_pyramid(gt)[2]], gt, ext))
            fd = (hi - lo) / (2 * eps)
            analytic = float((grad * v).sum())
            assert fd == pytest.approx(analytic, rel=1e-2)
