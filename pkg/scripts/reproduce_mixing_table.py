#!/usr/bin/env python3
"""Reproduce the mixing-ratio table over a 4363-item pool.

Splits 4363 items 70/15/15 (3054/654/655) and prints the training totals for
real:composite ratios 1:0 through 1:2.5.

Usage:
    python scripts/reproduce_mixing_table.py [--seed 42]
"""

import argparse

from holoforge.assembler import make_splits, mix_training

RATIOS = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    real = [(f"real_{i:05d}.png", f"real_{i:05d}.txt") for i in range(4363)]
    pool = [(f"comp_{i:05d}.png", f"comp_{i:05d}.txt") for i in range(7635)]
    manifest = make_splits(real, seed=args.seed)
    counts = manifest.counts()
    print(f"split: train={counts['train']} val={counts['val']} test={counts['test']}")
    print(f"{'ratio':>7} {'real':>6} {'composite':>10} {'total':>7}")
    for ratio in RATIOS:
        mixed = mix_training(manifest, pool, ratio)
        train = mixed.split_items("train")
        n_composite = sum(1 for item in train if item.provenance == "composite")
        n_real = len(train) - n_composite
        print(f"{mixed.ratio:>7} {n_real:>6} {n_composite:>10} {len(train):>7}")


if __name__ == "__main__":
    main()
