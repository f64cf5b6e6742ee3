#!/usr/bin/env python3
"""Informational joint-bilateral-filter benchmark: grid vs. exact filter.

The naive filter at the default 51-px window is O(window^2) per pixel, so a
full-HD frame takes minutes; pass a smaller --size first if impatient.
"""

import argparse
import time

import numpy as np

from dualmoire.imgcore import Image
from dualmoire.metrics import psnr
from dualmoire.recover import JbfParams, jbf_fast, jbf_naive


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", default="1920x1080", help="WIDTHxHEIGHT (default full HD)")
    ap.add_argument("--window", type=int, default=51)
    ap.add_argument("--sigma-range", type=float, default=10.0)
    ap.add_argument("--sigma-spatial", type=float, default=10.0)
    ap.add_argument("--skip-naive", action="store_true")
    args = ap.parse_args()

    w, h = (int(v) for v in args.size.lower().split("x"))
    p = JbfParams(args.window, args.sigma_range, args.sigma_spatial)
    rng = np.random.default_rng(0)
    img = Image(rng.random((3, h, w)))
    guide = Image(rng.random((3, h, w)))

    t0 = time.perf_counter()
    fast = jbf_fast(img, guide, p)
    t_fast = time.perf_counter() - t0
    print(f"jbf_fast  {w}x{h}: {t_fast:.2f}s")

    if args.skip_naive:
        return
    t0 = time.perf_counter()
    naive = jbf_naive(img, guide, p)
    t_naive = time.perf_counter() - t0
    print(f"jbf_naive {w}x{h}: {t_naive:.2f}s")
    print(f"speedup: {t_naive / t_fast:.1f}x   psnr(fast, naive): "
          f"{psnr(fast, naive):.1f} dB")


if __name__ == "__main__":
    main()
