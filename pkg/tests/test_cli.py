import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from dualmoire.cli import main
from dualmoire.imgcore import load_png, save_png
from dualmoire.moiresynth import SynthConfig, make_test_card, synth_pair


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "dualmoire.cli", *args],
                          capture_output=True, text=True)


def test_usage_error_exit_code():
    res = run_cli("synth", "--count", "2")  # missing --seed/--out
    assert res.returncode == 1


def test_data_error_exit_code(tmp_path):
    res = run_cli("demoire", "--focused", str(tmp_path / "missing.png"),
                  "--defocused", str(tmp_path / "m2.png"),
                  "--out", str(tmp_path / "o.png"))
    assert res.returncode == 2


def test_unknown_command_exit_code():
    res = run_cli("frobnicate")
    assert res.returncode == 1


def test_synth_writes_layout(tmp_path):
    rc = main(["synth", "--count", "2", "--seed", "3", "--out", str(tmp_path / "ds"),
               "--size", "48x48"])
    assert rc == 0
    names = sorted(p.name for p in (tmp_path / "ds").glob("*"))
    assert "00000_focused.png" in names and "00001_gt.png" in names
    assert "manifest.txt" in names


def test_synth_deterministic(tmp_path):
    for d in ("a", "b"):
        rc = main(["synth", "--count", "2", "--seed", "11",
                   "--out", str(tmp_path / d), "--size", "48x48"])
        assert rc == 0
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_flow_and_demoire_external(tmp_path):
    s = synth_pair(make_test_card(0, 64, 64, seed=4), None, SynthConfig(seed=4), 0)
    f = tmp_path / "f.png"
    d = tmp_path / "d.png"
    save_png(s.focused, f)
    save_png(s.defocused, d)
    flo = tmp_path / "x.flo"
    assert main(["flow", "--a", str(f), "--b", str(d), "--out", str(flo)]) == 0
    assert flo.is_file()
    out = tmp_path / "o.png"
    rc = main(["demoire", "--focused", str(f), "--defocused", str(d),
               "--external", str(flo), "--out", str(out),
               "--jbf-window", "15", "--jbf-sigma-spatial", "4"])
    assert rc == 0
    assert load_png(out).width == 64


def test_eval_key_value_output(tmp_path, capsys):
    s = synth_pair(make_test_card(1, 48, 48, seed=4), None, SynthConfig(seed=4), 1)
    pred = tmp_path / "pred"
    gt = tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    save_png(s.focused, pred / "0.png")
    save_png(s.gt, gt / "0.png")
    assert main(["eval", "--pred", str(pred), "--gt", str(gt)]) == 0
    out = capsys.readouterr().out
    kv = dict(tok.split("=", 1) for line in out.splitlines() for tok in line.split()
              if "=" in tok)
    assert float(kv["psnr_mean"]) > 5.0
    assert 0.0 <= float(kv["ssim_mean"]) <= 1.0
    assert kv["frames"] == "1"


def test_synth_video_cli(tmp_path):
    rc = main(["synth-video", "--frames", "2", "--seed", "5",
               "--out", str(tmp_path / "vid"), "--size", "48x48"])
    assert rc == 0
    assert (tmp_path / "vid" / "00001_defocused.png").is_file()


def test_run_dataset_mode(tmp_path):
    assert main(["synth", "--count", "2", "--seed", "6", "--out", str(tmp_path / "ds"),
                 "--size", "48x48"]) == 0
    rc = main(["run", "--dataset", str(tmp_path / "ds"), "--out", str(tmp_path / "o"),
               "--mode", "no-jbf"])
    assert rc == 0
    assert len(list((tmp_path / "o").glob("*.png"))) == 2


def test_synth_with_foreground(tmp_path):
    import cv2

    fg_dir = tmp_path / "fg"
    fg_dir.mkdir()
    rgba = np.zeros((48, 48, 4), np.uint8)
    rgba[10:30, 10:30] = (0, 200, 30, 255)
    cv2.imwrite(str(fg_dir / "m.png"), rgba[..., [2, 1, 0, 3]])
    rc = main(["synth", "--count", "1", "--seed", "8", "--out", str(tmp_path / "ds"),
               "--size", "48x48", "--foreground", str(fg_dir)])
    assert rc == 0
    assert (tmp_path / "ds" / "00000_focused.png").is_file()
