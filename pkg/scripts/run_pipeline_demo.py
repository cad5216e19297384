#!/usr/bin/env python3
"""End-to-end pipeline demo on a synthetic two-modality corpus.

Builds fake optical/holographic slide pairs, then drives every CLI stage in
order: fit-affine -> transfer-labels -> expand-boxes -> tile ->
extract-grains -> composite -> assemble -> emit -> stats -> eval-map ->
toy-embed -> eval-fid. Everything lands under --workdir (default ./demo_run).

Usage:
    python scripts/run_pipeline_demo.py [--workdir demo_run] [--seed 7]
"""

import argparse
import shutil
import sys
from pathlib import Path

import numpy as np

from holoforge import io as hio
from holoforge.cli import run as holoforge
from holoforge.geometry import AffineTransform, BBox


def build_corpus(root: Path, seed: int) -> AffineTransform:
    """Two 1920x1280 slide pairs; holographic = affine-warped optical."""
    rng = np.random.default_rng(seed)
    warp = AffineTransform(a=0.98, b=0.015, tx=14.0, c=-0.01, d=1.02, ty=-9.0)
    for sub in ("optical/images", "optical/labels", "holo/images", "pairs"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    width, height = 1920, 1280
    for index in range(2):
        stem = f"slide{index}"
        optical = rng.integers(25, 70, size=(height, width), dtype=np.uint8)
        labels = []
        for _ in range(40):
            side_w = int(rng.integers(45, 95))
            side_h = int(rng.integers(45, 95))
            x0 = int(rng.integers(0, width - side_w))
            y0 = int(rng.integers(0, height - side_h))
            optical[y0 : y0 + side_h, x0 : x0 + side_w] = int(rng.integers(150, 240))
            labels.append(
                BBox.from_extent(
                    0, x0 / width, y0 / height, (x0 + side_w) / width, (y0 + side_h) / height
                )
            )
        hio.write_image(root / "optical/images" / f"{stem}.png", optical)
        hio.write_label_file(root / "optical/labels" / f"{stem}.txt", labels)
        # The holographic twin: same content through the warp, plus speckle.
        holo = np.clip(
            optical.astype(np.int16) + rng.integers(-18, 18, size=optical.shape),
            0, 255,
        ).astype(np.uint8)
        hio.write_image(root / "holo/images" / f"{stem}.png", holo)
    # Control points for the affine fit.
    points = [(100, 100), (1800, 120), (150, 1150), (1700, 1100), (960, 640), (500, 900)]
    (root / "pairs" / "control_points.txt").write_text(
        "".join(
            f"{x} {y} {warp.apply(x, y)[0]:.6f} {warp.apply(x, y)[1]:.6f}\n"
            for x, y in points
        )
    )
    return warp


def jittered_detections(root: Path, labels_dir: Path, out_file: Path, seed: int) -> None:
    rng = np.random.default_rng(seed)
    rows = []
    for label_file in sorted(labels_dir.glob("*.txt")):
        for box in hio.read_label_file(label_file):
            if rng.random() < 0.85:
                jitter = rng.uniform(-0.01, 0.01, size=2)
                rows.append(
                    (
                        label_file.stem,
                        0,
                        BBox(
                            0,
                            float(np.clip(box.cx + jitter[0], 0, 1)),
                            float(np.clip(box.cy + jitter[1], 0, 1)),
                            box.w,
                            box.h,
                        ),
                        float(rng.uniform(0.4, 1.0)),
                    )
                )
        rows.append(  # one background false alarm per patch
            (label_file.stem, 0, BBox(0, 0.1, 0.1, 0.04, 0.04), float(rng.uniform(0, 0.4)))
        )
    hio.write_detection_file(out_file, rows)


def step(title: str, argv: list[str]) -> None:
    print(f"\n=== {title}\n    $ holoforge {' '.join(argv)}")
    code = holoforge(argv)
    if code != 0:
        sys.exit(f"stage failed with exit code {code}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", type=Path, default=Path("demo_run"))
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    root = args.workdir
    if root.exists():
        shutil.rmtree(root)
    root.mkdir(parents=True)

    print(f"Building synthetic corpus under {root} ...")
    build_corpus(root, args.seed)

    step("Fit the optical->holographic affine", [
        "fit-affine",
        "--pairs", str(root / "pairs/control_points.txt"),
        "--out", str(root / "transform.txt"),
    ])
    step("Transfer optical labels into the holographic frame", [
        "transfer-labels",
        "--labels", str(root / "optical/labels"),
        "--transform", str(root / "transform.txt"),
        "--src-size", "1920x1280", "--dst-size", "1920x1280",
        "--out", str(root / "holo/labels"),
    ])
    step("Expand box areas by 50% to absorb alignment noise", [
        "expand-boxes",
        "--labels", str(root / "holo/labels"),
        "--factor", "0.5",
        "--out", str(root / "holo/labels_expanded"),
    ])
    step("Tile slides into 640x640 patches (stride 320)", [
        "tile",
        "--images", str(root / "holo/images"),
        "--labels", str(root / "holo/labels_expanded"),
        "--tile", "640", "--step", "320",
        "--out", str(root / "patches"),
    ])
    step("Extract grain crops with quality filters", [
        "extract-grains",
        "--images", str(root / "holo/images"),
        "--labels", str(root / "holo/labels_expanded"),
        "--out", str(root / "grains"),
    ])
    step("Composite grains onto empty background patches", [
        "composite",
        "--backgrounds", str(root / "patches/background/images"),
        "--grains", str(root / "grains"),
        "--n", "12", "--seed", str(args.seed),
        "--out", str(root / "composites"),
    ])
    step("Assemble a 1:1 mixed training manifest", [
        "assemble",
        "--real-images", str(root / "patches/annotated/images"),
        "--real-labels", str(root / "patches/annotated/labels"),
        "--synthetic-images", str(root / "composites/images"),
        "--synthetic-labels", str(root / "composites/labels"),
        "--ratio", "1.0", "--seed", str(args.seed),
        "--out", str(root / "manifest.tsv"),
    ])
    step("Emit the dataset tree", [
        "emit",
        "--manifest", str(root / "manifest.tsv"),
        "--out", str(root / "dataset"),
    ])
    step("Dataset statistics", [
        "stats", "--manifest", str(root / "manifest.tsv"),
    ])

    print("\nSimulating an external detector (jittered ground truth) ...")
    jittered_detections(
        root, root / "patches/annotated/labels", root / "detections.txt", args.seed
    )
    step("Evaluate detections (mAP50 / precision / recall)", [
        "eval-map",
        "--ground-truth", str(root / "patches/annotated/labels"),
        "--detections", str(root / "detections.txt"),
        "--cutoff", "0.4",
        "--curve-out", str(root / "pr_curve.txt"),
    ])
    step("Embed real patches (toy embedder)", [
        "toy-embed",
        "--images", str(root / "patches/annotated/images"),
        "--out", str(root / "real.emb"),
    ])
    step("Embed composites (toy embedder)", [
        "toy-embed",
        "--images", str(root / "composites/images"),
        "--out", str(root / "synthetic.emb"),
    ])
    step("Fréchet distance real vs synthetic", [
        "eval-fid",
        "--a", str(root / "real.emb"),
        "--b", str(root / "synthetic.emb"),
    ])
    print(f"\nDemo complete; artifacts under {root}/")


if __name__ == "__main__":
    main()
