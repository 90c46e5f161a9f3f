#!/usr/bin/env python3
"""Convert one Columbia multispectral scene (31 band PNGs) to a flat cube.

Writes <out> as little-endian float64 with rows fastest, then columns, then
bands, plus <out>.hdr holding "rows cols bands". Values are scaled to [0, 1].
"""
import argparse
import pathlib
import sys

import numpy as np
from PIL import Image


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scene_dir", type=pathlib.Path)
    ap.add_argument("out", type=pathlib.Path)
    args = ap.parse_args()

    files = sorted(args.scene_dir.rglob("*.png"))
    if not files:
        sys.exit(f"error: no PNG bands under {args.scene_dir}")
    bands = []
    for f in files:
        a = np.asarray(Image.open(f))
        if a.ndim == 3:  # a few scenes ship RGBA band images
            a = a[..., 0]
        scale = 65535.0 if a.dtype == np.uint16 or a.max() > 255 else 255.0
        bands.append(a.astype(np.float64) / scale)
    cube = np.stack(bands, axis=2)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    cube.ravel(order="F").astype("<f8").tofile(args.out)
    args.out.with_name(args.out.name + ".hdr").write_text(
        "{} {} {}\n".format(*cube.shape))
    print(f"{args.out}: {cube.shape[0]}x{cube.shape[1]}x{cube.shape[2]}")


if __name__ == "__main__":
    main()
