#!/usr/bin/env python3
"""Materialize the synthetic similar-shapes dataset as an .npz container.

Example:
    python scripts/make_toy_dataset.py --out runs/toy/dataset.npz \
        --counts 500,50,50,100 --seed 7
"""

import argparse
from pathlib import Path

from bagan_gp import data, toydata


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="Output .npz path.")
    parser.add_argument("--counts", default="500,50,50,100",
                        help="Comma-separated per-class image counts.")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    counts = tuple(int(c) for c in args.counts.split(","))
    images, labels = toydata.make_similar_shapes_dataset(counts=counts, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.save_container(out, images, labels)
    print(f"wrote {len(images)} images ({len(counts)} classes) to {out}")


if __name__ == "__main__":
    main()
