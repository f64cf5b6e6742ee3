import os

import numpy as np
import pytest

from dualmoire.align import FlowField
from dualmoire.imgcore import Image, load_png, save_png
from dualmoire.metrics import hf_distance, psnr, t_mse
from dualmoire.moiresynth import SynthConfig, make_test_card, synth_pair
from dualmoire.pipeline import PipelineConfig, load_config, run_frame, run_sequence
from dualmoire.recover import JbfParams

from conftest import random_image


def small_jbf():
    return JbfParams(window=15, sigma_range=10.0, sigma_spatial=4.0)


def zero_flows(w, h):
    z = FlowField(np.zeros((h, w, 2), np.float32))
    return z, z


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(mode="bogus")
    with pytest.raises(ValueError):
        PipelineConfig(flow_source="magic")


def test_config_file_roundtrip(tmp_path):
    cfg_file = tmp_path / "p.cfg"
    cfg_file.write_text(
        "mode = no-jbf\n"
        "# comment line\n"
        "jbf_window = 21\n"
        "jbf_sigma_range = 8\n"
        "occl_beta = 0.75\n")
    cfg = load_config(cfg_file)
    assert cfg.mode == "no-jbf"
    assert cfg.jbf.window == 21
    assert cfg.jbf.sigma_range == 8.0
    assert cfg.jbf.sigma_spatial == 10.0  # untouched default
    assert cfg.occl_beta == 0.75


def test_config_file_rejects_unknown_key(tmp_path):
    cfg_file = tmp_path / "p.cfg"
    cfg_file.write_text("warp_speed = 9\n")
    with pytest.raises(ValueError):
        load_config(cfg_file)


def test_guided_mode_requires_guide(rng):
    img = random_image(rng, 3, 32, 32)
    with pytest.raises(ValueError):
        run_frame(img, img, PipelineConfig(mode="guided", jbf=small_jbf()))


def test_no_jbf_all_valid_returns_warped(rng):
    focused = random_image(rng, 3, 32, 32)
    defocused = random_image(rng, 3, 32, 32)
    fwd, bwd = zero_flows(32, 32)
    out = run_frame(focused, defocused, PipelineConfig(mode="no-jbf"),
                    flow_fwd=fwd, flow_bwd=bwd)
    # zero flow warps to the defocused frame itself and the mask is all-valid
    np.testing.assert_allclose(out.data, defocused.data, atol=1e-12)


def test_no_alignment_uses_defocused_directly(rng):
    focused = random_image(rng, 3, 32, 32)
    defocused = random_image(rng, 3, 32, 32)
    out = run_frame(focused, defocused,
                    PipelineConfig(mode="no-alignment", jbf=small_jbf()))
    guided = run_frame(focused, defocused,
                       PipelineConfig(mode="guided", jbf=small_jbf()),
                       guide=defocused)
    np.testing.assert_allclose(out.data, guided.data, atol=1e-12)


def test_degenerate_pair_preserves_mean(rng):
    from dualmoire.recover import jbf_fast

    s = synth_pair(make_test_card(0, 64, 64, seed=5), None, SynthConfig(seed=5), 0)
    out = run_frame(s.focused, s.focused, PipelineConfig(jbf=small_jbf()))
    for c in range(3):
        assert abs(out.data[c].mean() - s.focused.data[c].mean()) <= 2 / 255
    # identical inputs align to themselves, so this is bilateral self-filtering
    self_filtered = jbf_fast(s.focused, s.focused, small_jbf())
    assert psnr(out, self_filtered) >= 40.0


def test_guided_with_gt_improves_psnr():
    s = synth_pair(make_test_card(3, 64, 64, seed=5), None, SynthConfig(seed=5), 3)
    cfg = PipelineConfig(mode="guided", jbf=small_jbf())
    out = run_frame(s.focused, s.defocused, cfg, guide=s.gt)
    assert psnr(out, s.gt) > psnr(s.focused, s.gt)


def test_jbf_only_reduces_hf_distance():
    s = synth_pair(make_test_card(2, 64, 64, seed=5), None, SynthConfig(seed=5), 2)
    out = run_frame(s.focused, s.defocused, PipelineConfig(jbf=small_jbf()))
    assert hf_distance(out, s.gt) < hf_distance(s.focused, s.gt)


def test_dim_mismatch(rng):
    with pytest.raises(ValueError):
        run_frame(random_image(rng, 3, 8, 8), random_image(rng, 3, 8, 9),
                  PipelineConfig())


# ---------------------------------------------------------------------------
# Sequences


def _write_pair_dirs(tmp_path, samples):
    dir_f = tmp_path / "f"
    dir_d = tmp_path / "d"
    dir_f.mkdir()
    dir_d.mkdir()
    for i, s in enumerate(samples):
        save_png(s.focused, dir_f / f"{i:04d}.png")
        save_png(s.defocused, dir_d / f"{i:04d}.png")
    return dir_f, dir_d


def test_single_frame_dir_matches_run_frame(tmp_path):
    s = synth_pair(make_test_card(1, 64, 64, seed=6), None, SynthConfig(seed=6), 1)
    dir_f, dir_d = _write_pair_dirs(tmp_path, [s])
    cfg = PipelineConfig(jbf=small_jbf())
    out_paths = run_sequence(dir_f, dir_d, cfg, tmp_path / "out")
    assert len(out_paths) == 1
    direct = run_frame(load_png(dir_f / "0000.png"), load_png(dir_d / "0000.png"), cfg)
    seq = load_png(out_paths[0])
    q = np.floor(np.clip(direct.data, 0, 1) * 255 + 0.5) / 255
    np.testing.assert_allclose(seq.data, q, atol=1e-12)


def test_static_sequence_is_static(tmp_path):
    s = synth_pair(make_test_card(2, 64, 64, seed=6), None, SynthConfig(seed=6), 2)
    dir_f, dir_d = _write_pair_dirs(tmp_path, [s] * 5)
    outs = run_sequence(dir_f, dir_d, PipelineConfig(jbf=small_jbf()), tmp_path / "out")
    frames = [load_png(p) for p in outs]
    assert t_mse(frames) <= 1e-6 * 255 ** 2


def test_worker_count_does_not_change_bytes(tmp_path, monkeypatch):
    samples = [synth_pair(make_test_card(i, 64, 64, seed=6), None, SynthConfig(seed=6), i)
               for i in range(3)]
    dir_f, dir_d = _write_pair_dirs(tmp_path, samples)
    cfg = PipelineConfig(jbf=small_jbf())
    monkeypatch.setenv("DUALMOIRE_THREADS", "1")
    outs1 = run_sequence(dir_f, dir_d, cfg, tmp_path / "o1")
    monkeypatch.setenv("DUALMOIRE_THREADS", "3")
    outs3 = run_sequence(dir_f, dir_d, cfg, tmp_path / "o3")
    for a, b in zip(outs1, outs3):
        assert a.read_bytes() == b.read_bytes()


def test_frame_permutation_permutes_outputs(tmp_path):
    samples = [synth_pair(make_test_card(i, 64, 64, seed=9), None, SynthConfig(seed=9), i)
               for i in range(2)]
    dir_f, dir_d = _write_pair_dirs(tmp_path, samples)
    cfg = PipelineConfig(jbf=small_jbf())
    outs = run_sequence(dir_f, dir_d, cfg, tmp_path / "fwd")

    swapped = tmp_path / "swapped"
    sf, sd = swapped / "f", swapped / "d"
    sf.mkdir(parents=True)
    sd.mkdir(parents=True)
    for i, j in ((0, 1), (1, 0)):
        save_png(samples[j].focused, sf / f"{i:04d}.png")
        save_png(samples[j].defocused, sd / f"{i:04d}.png")
    outs_sw = run_sequence(sf, sd, cfg, tmp_path / "bwd")
    assert outs[0].read_bytes() == outs_sw[1].read_bytes()
    assert outs[1].read_bytes() == outs_sw[0].read_bytes()


def test_count_mismatch_rejected(tmp_path):
    s = synth_pair(make_test_card(0, 64, 64, seed=6), None, SynthConfig(seed=6), 0)
    dir_f, dir_d = _write_pair_dirs(tmp_path, [s])
    save_png(s.focused, dir_f / "extra.png")
    with pytest.raises(ValueError):
        run_sequence(dir_f, dir_d, PipelineConfig(), tmp_path / "out")


def test_tonal_consistency_all_jbf_modes():
    s = synth_pair(make_test_card(5, 64, 64, seed=12), None, SynthConfig(seed=12), 5)
    for mode in ("jbf-only", "no-alignment"):
        out = run_frame(s.focused, s.defocused,
                        PipelineConfig(mode=mode, jbf=small_jbf()))
        for c in range(3):
            assert abs(out.data[c].mean() - s.focused.data[c].mean()) <= 2 / 255
