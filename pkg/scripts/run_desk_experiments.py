#!/usr/bin/env python3
"""Run every experiment at desk scale and drop the CSVs under out/.

Builds the desk digit files on first use.  Real MNIST works too: pass
--data-dir pointing at a directory containing train-images-idx3-ubyte and
train-labels-idx1-ubyte.
"""

import argparse
import os
import sys
import time

from gradbound.cli import EXPERIMENTS, main as cli_main
from gradbound.deskdata import build_desk_idx


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out")
    parser.add_argument("--data-dir", default=None,
                        help="directory with real MNIST IDX files (default: desk surrogate)")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    if args.data_dir:
        images = os.path.join(args.data_dir, "train-images-idx3-ubyte")
        labels = os.path.join(args.data_dir, "train-labels-idx1-ubyte")
    else:
        images, labels = build_desk_idx(os.path.join(args.out_dir, "data"))
    os.makedirs(args.out_dir, exist_ok=True)

    failures = 0
    for experiment in EXPERIMENTS:
        out = os.path.join(args.out_dir, f"{experiment}.csv")
        argv = [experiment, "--seed", str(args.seed), "--out", out]
        if experiment != "identity-checks":
            argv += ["--data-images", images, "--data-labels", labels]
        t0 = time.time()
        code = cli_main(argv)
        print(f"{experiment}: exit {code} in {time.time() - t0:.1f}s -> {out}")
        failures += code != 0
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
