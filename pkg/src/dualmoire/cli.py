"""Command line interface.

Subcommands: synth, synth-video, flow, demoire, run, eval.
Exit codes: 0 success, 1 usage error, 2 data error.
The DUALMOIRE_THREADS environment variable caps the worker pool.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from dualmoire import align, metrics, moiresynth, pipeline
from dualmoire.imgcore import Image, PngFormatError, load_png, load_png_rgba, save_png
from dualmoire.recover import JbfParams

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from e


def build_parser() -> _Parser:
    p = _Parser(prog="dualmoire",
                description="Dual-camera video demoireing toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sy = sub.add_parser("synth", parents=[], help="generate an image dataset")
    sy.add_argument("--count", type=int, required=True)
    sy.add_argument("--seed", type=int, required=True)
    sy.add_argument("--out", required=True)
    sy.add_argument("--foreground", help="directory of RGBA PNG mattes")
    sy.add_argument("--gt-dir", help="use these PNGs as ground truth instead of test cards")
    sy.add_argument("--size", type=_size, default=(128, 128), metavar="WxH")
    sy.add_argument("--achromatic", action="store_true",
                    help="grayscale test cards (zero ground-truth chroma)")
    sy.add_argument("--jitter", type=float, default=0.05)

    sv = sub.add_parser("synth-video", help="generate a constant-translation video")
    sv.add_argument("--frames", type=int, required=True)
    sv.add_argument("--seed", type=int, required=True)
    sv.add_argument("--out", required=True)
    sv.add_argument("--gt-dir", help="PNG frames to use as ground truth")
    sv.add_argument("--size", type=_size, default=(128, 128), metavar="WxH")
    sv.add_argument("--achromatic", action="store_true")
    sv.add_argument("--jitter", type=float, default=0.05)

    fl = sub.add_parser("flow", help="estimate block-matching flow between two frames")
    fl.add_argument("--a", required=True, help="frame the flow is aligned with")
    fl.add_argument("--b", required=True, help="frame the flow points into")
    fl.add_argument("--out", required=True, help="output .flo path")
    fl.add_argument("--levels", type=int, default=4)
    fl.add_argument("--radius", type=int, default=4)
    fl.add_argument("--block", type=int, default=8)

    dm = sub.add_parser("demoire", help="process a single frame pair")
    dm.add_argument("--focused", required=True)
    dm.add_argument("--defocused", required=True)
    dm.add_argument("--guide", help="refined guide image (guided mode)")
    dm.add_argument("--mode", choices=pipeline.MODES, default="jbf-only")
    dm.add_argument("--out", required=True)
    dm.add_argument("--external", help="precomputed forward flow (.flo)")
    dm.add_argument("--config", help="key = value pipeline config file")
    _jbf_args(dm)

    rn = sub.add_parser("run", help="process paired frame directories")
    rn.add_argument("--focused", help="directory of focused frames")
    rn.add_argument("--defocused", help="directory of defocused frames")
    rn.add_argument("--dataset", help="synth dataset directory (uses *_focused/_defocused)")
    rn.add_argument("--out", required=True)
    rn.add_argument("--guide", help="directory of guide frames (guided mode)")
    rn.add_argument("--flow-dir", help="directory of precomputed forward .flo files")
    rn.add_argument("--mode", choices=pipeline.MODES, default="jbf-only")
    rn.add_argument("--config", help="key = value pipeline config file")
    _jbf_args(rn)

    ev = sub.add_parser("eval", help="metric report for outputs vs ground truth")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--video", action="store_true",
                    help="also report temporal consistency of the predictions")
    return p


def _jbf_args(sp) -> None:
    sp.add_argument("--jbf-window", type=int, default=None)
    sp.add_argument("--jbf-sigma-range", type=float, default=None)
    sp.add_argument("--jbf-sigma-spatial", type=float, default=None)
    sp.add_argument("--jbf-impl", choices=("fast", "naive"), default=None)


def _pipeline_config(args) -> pipeline.PipelineConfig:
    cfg = pipeline.PipelineConfig()
    if getattr(args, "config", None):
        cfg = pipeline.load_config(args.config, cfg)
    # CLI flags override file values
    from dataclasses import replace

    updates = {}
    if args.mode:
        updates["mode"] = args.mode
    if getattr(args, "external", None) or getattr(args, "flow_dir", None):
        updates["flow_source"] = "external"
    jbf = cfg.jbf
    jbf_updates = {}
    if args.jbf_window is not None:
        jbf_updates["window"] = args.jbf_window
    if args.jbf_sigma_range is not None:
        jbf_updates["sigma_range"] = args.jbf_sigma_range
    if args.jbf_sigma_spatial is not None:
        jbf_updates["sigma_spatial"] = args.jbf_sigma_spatial
    if jbf_updates:
        updates["jbf"] = JbfParams(
            window=jbf_updates.get("window", jbf.window),
            sigma_range=jbf_updates.get("sigma_range", jbf.sigma_range),
            sigma_spatial=jbf_updates.get("sigma_spatial", jbf.sigma_spatial))
    if args.jbf_impl is not None:
        updates["jbf_impl"] = args.jbf_impl
    return replace(cfg, **updates) if updates else cfg


def _gt_images(args, count: int) -> list[Image]:
    w, h = args.size
    if args.gt_dir:
        files = sorted(Path(args.gt_dir).glob("*.png"))
        if not files:
            raise FileNotFoundError(f"no PNGs in {args.gt_dir}")
        return [load_png(files[i % len(files)]) for i in range(count)]
    return [moiresynth.make_test_card(i, w, h, achromatic=args.achromatic, seed=args.seed)
            for i in range(count)]


def _foregrounds(args, rng) -> list[tuple[Image, Image]] | None:
    if not getattr(args, "foreground", None):
        return None
    files = sorted(Path(args.foreground).glob("*.png"))
    if not files:
        raise FileNotFoundError(f"no foreground PNGs in {args.foreground}")
    return [load_png_rgba(f) for f in files]


def _cmd_synth(args) -> int:
    cfg = moiresynth.SynthConfig(seed=args.seed,
                                 homography_corner_jitter=args.jitter,
                                 with_foreground=bool(args.foreground))
    gts = _gt_images(args, args.count)
    fgs = _foregrounds(args, None)

    def gen():
        import numpy as np

        for i in range(args.count):
            fg = None
            if fgs:
                # dedicated stream so the pick never aliases the chain draws
                pick_rng = np.random.Generator(
                    np.random.Philox(np.random.SeedSequence((args.seed, i, 3))))
                pick = int(pick_rng.integers(0, len(fgs)))
                fg_img, fg_alpha = fgs[pick]
                fg = (_fit(fg_img, gts[i]), _fit(fg_alpha, gts[i]))
            yield moiresynth.synth_pair(gts[i], fg, cfg, i)

    manifest = moiresynth.write_dataset(gen(), args.out)
    print(f"wrote {args.count} samples to {args.out} (manifest {manifest.name})")
    return EXIT_OK


def _fit(img: Image, ref: Image) -> Image:
    from dualmoire.imgcore import resize_bilinear

    if (img.height, img.width) == (ref.height, ref.width):
        return img
    return resize_bilinear(img, ref.width, ref.height)


def _cmd_synth_video(args) -> int:
    base = moiresynth.SynthConfig(seed=args.seed,
                                  homography_corner_jitter=args.jitter)
    cfg = moiresynth.VideoSynthConfig(base=base, frame_count=args.frames)
    gts = _gt_images(args, args.frames)
    samples = moiresynth.synth_video(gts, cfg)
    manifest = moiresynth.write_dataset(samples, args.out)
    print(f"wrote {len(samples)} video frames to {args.out} (manifest {manifest.name})")
    return EXIT_OK


def _cmd_flow(args) -> int:
    a = load_png(args.a)
    b = load_png(args.b)
    field = align.estimate_flow_blockmatch(a, b, args.levels, args.radius, args.block)
    align.save_flo(field, args.out)
    print(f"wrote flow {field.width}x{field.height} to {args.out}")
    return EXIT_OK


def _cmd_demoire(args) -> int:
    cfg = _pipeline_config(args)
    focused = load_png(args.focused)
    defocused = load_png(args.defocused)
    guide = load_png(args.guide) if args.guide else None
    fwd = bwd = None
    if args.external:
        fwd = align.load_flo(args.external)
        _, bwd = pipeline.compute_flow_pair(focused, defocused, cfg)
    out = pipeline.run_frame(focused, defocused, cfg, guide, fwd, bwd)
    save_png(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _split_dataset(dataset: str, tmp: Path) -> tuple[Path, Path]:
    import shutil

    src = Path(dataset)
    foc = tmp / "focused"
    dfc = tmp / "defocused"
    foc.mkdir(parents=True)
    dfc.mkdir(parents=True)
    pairs = sorted(src.glob("*_focused.png"))
    if not pairs:
        raise FileNotFoundError(f"no *_focused.png frames in {src}")
    for f in pairs:
        d = src / f.name.replace("_focused", "_defocused")
        if not d.is_file():
            raise FileNotFoundError(f"missing defocused frame for {f.name}")
        shutil.copy(f, foc / f.name)
        shutil.copy(d, dfc / d.name)
    return foc, dfc


def _cmd_run(args) -> int:
    import tempfile

    cfg = _pipeline_config(args)
    if args.dataset:
        with tempfile.TemporaryDirectory() as tmp:
            dir_f, dir_d = _split_dataset(args.dataset, Path(tmp))
            written = pipeline.run_sequence(dir_f, dir_d, cfg, args.out,
                                            guide_dir=args.guide,
                                            external_flow_dir=args.flow_dir)
    else:
        if not args.focused or not args.defocused:
            print("dualmoire run: need --dataset or both --focused and --defocused",
                  file=sys.stderr)
            raise SystemExit(EXIT_USAGE)
        written = pipeline.run_sequence(args.focused, args.defocused, cfg, args.out,
                                        guide_dir=args.guide,
                                        external_flow_dir=args.flow_dir)
    print(f"wrote {len(written)} frames to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    pred_files = sorted(Path(args.pred).glob("*.png"))
    gt_files = sorted(Path(args.gt).glob("*.png"))
    if not pred_files:
        raise FileNotFoundError(f"no PNGs in {args.pred}")
    if len(pred_files) != len(gt_files):
        raise ValueError(f"frame count mismatch: {len(pred_files)} vs {len(gt_files)}")
    report = metrics.MetricReport()
    preds = []
    for pf, gf in zip(pred_files, gt_files):
        pred = load_png(pf)
        gt = load_png(gf)
        metrics.compare_images(pred, gt, report)
        if args.video:
            preds.append(pred)
        last = {k: v[-1] for k, v in report.per_frame.items()}
        print(f"frame={pf.stem} " + " ".join(f"{k}={v!r}" for k, v in last.items()))
    for name, value in report.means().items():
        print(f"{name}_mean={value!r}")
    if args.video:
        print(f"t_mse={metrics.t_mse(preds)!r}")
        print(f"t_ssim={metrics.t_ssim(preds)!r}")
    print(f"frames={report.frames}")
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "synth-video": _cmd_synth_video,
    "flow": _cmd_flow,
    "demoire": _cmd_demoire,
    "run": _cmd_run,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except SystemExit as e:
        return int(e.code or 0)
    except (FileNotFoundError, PngFormatError, align.FloFormatError, ValueError, OSError) as e:
        print(f"dualmoire: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
