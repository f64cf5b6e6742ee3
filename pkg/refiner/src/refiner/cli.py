"""Command line interface: `refiner train` and `refiner infer`."""

from __future__ import annotations

import argparse
import sys


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="refiner",
                                description="Demoireing guide refiner")
    sub = p.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train on a synthetic dataset directory")
    tr.add_argument("--data", required=True, help="dataset dir (synth layout)")
    tr.add_argument("--out", required=True, help="checkpoint/log directory")
    tr.add_argument("--aligned", help="directory of aligned frames "
                                      "(defaults to the defocused frames)")
    tr.add_argument("--steps", type=int, default=2000)
    tr.add_argument("--crop", type=int, default=256)
    tr.add_argument("--width", type=int, default=16)
    tr.add_argument("--lr", type=float, default=2e-4)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--lam-p", type=float, default=1.0)
    tr.add_argument("--lam-h", type=float, default=0.1)
    tr.add_argument("--lam-a", type=float, default=0.1)
    tr.add_argument("--checkpoint-every", type=int, default=0)
    tr.add_argument("--no-pretrained", action="store_true",
                    help="skip the pretrained perceptual-weight lookup")

    inf = sub.add_parser("infer", help="export refined guide frames")
    inf.add_argument("--checkpoint", required=True)
    inf.add_argument("--focused", required=True)
    inf.add_argument("--aligned", required=True)
    inf.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train":
        from refiner.train import TrainConfig, Trainer

        cfg = TrainConfig(data_dir=args.data, out_dir=args.out,
                          aligned_dir=args.aligned, steps=args.steps,
                          crop=args.crop, width=args.width, lr=args.lr,
                          seed=args.seed, lam_p=args.lam_p, lam_h=args.lam_h,
                          lam_a=args.lam_a,
                          checkpoint_every=args.checkpoint_every,
                          pretrained_features=not args.no_pretrained)
        ckpt = Trainer(cfg).run()
        print(f"wrote {ckpt}")
        return 0
    if args.command == "infer":
        from refiner.infer import infer_dir

        written = infer_dir(args.checkpoint, args.focused, args.aligned, args.out)
        print(f"wrote {len(written)} guides to {args.out}")
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
