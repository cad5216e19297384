"""Command-line interface: one pipeline stage per subcommand.

Every subcommand is deterministic given its inputs and seed, never mutates
its inputs, and drops a run-metadata line (tool version, seed, parameter
echo) into the output directory. Exit codes: 0 success, 1 domain error,
2 usage error. `HOLOFORGE_LOG` selects the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, assembler, compositor, evaluator, tiler
from . import io as hio
from .errors import HoloforgeError, MissingSource
from .geometry import ImageGeometry, expand_bbox_area, fit_affine, transform_bbox

log = logging.getLogger("holoforge")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")


def _parse_size(text: str) -> ImageGeometry:
    try:
        width, height = text.lower().split("x")
        return ImageGeometry(width_px=int(width), height_px=int(height))
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(
            f"expected WIDTHxHEIGHT, got {text!r}"
        ) from exc


def _list_images(folder: Path) -> list[Path]:
    return sorted(
        p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )


def _label_files(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.glob("*.txt") if not p.name.startswith("run_metadata."))
    return [path]


def _write_run_metadata(args: argparse.Namespace, out: Path) -> None:
    out_dir = out if out.is_dir() else out.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    skip = {"func", "log_level"}
    echo = " ".join(
        f"{key}={value}"
        for key, value in sorted(vars(args).items())
        if key not in skip and value is not None
    )
    line = f"version={__version__} {echo}\n"
    (out_dir / f"run_metadata.{args.subcommand}.meta").write_text(line)


def _print_report(values: dict[str, object], as_json: bool, out: Path | None) -> None:
    text = (
        json.dumps(values, indent=2, sort_keys=True)
        if as_json
        else hio.format_keyvalue_report(values)
    )
    print(text)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")


# ---------------------------------------------------------------- stages

def cmd_fit_affine(args: argparse.Namespace) -> int:
    pairs = hio.read_pairs_file(args.pairs)
    transform = fit_affine(pairs)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    hio.write_transform_file(args.out, transform)
    residuals = transform.apply_points(
        np.array([p[0] for p in pairs])
    ) - np.array([p[1] for p in pairs])
    rms = float(np.sqrt(np.mean(residuals**2)))
    _write_run_metadata(args, args.out)
    print(f"coefficients={' '.join(f'{v:.17g}' for v in transform.coefficients())}")
    print(f"rms_residual_px={rms:.6g}")
    return 0


def cmd_transfer_labels(args: argparse.Namespace) -> int:
    transform = hio.read_transform_file(args.transform)
    args.out.mkdir(parents=True, exist_ok=True)
    kept = discarded = 0
    for label_file in _label_files(args.labels):
        out_boxes = []
        for box in hio.read_label_file(label_file):
            moved = transform_bbox(
                box, args.src_size, transform, args.dst_size, args.min_inside
            )
            if moved is None:
                discarded += 1
            else:
                out_boxes.append(moved)
                kept += 1
        hio.write_label_file(args.out / label_file.name, out_boxes)
    _write_run_metadata(args, args.out)
    print(f"kept={kept}")
    print(f"discarded={discarded}")
    return 0


def cmd_expand_boxes(args: argparse.Namespace) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    count = 0
    for label_file in _label_files(args.labels):
        boxes = [
            expand_bbox_area(box, args.factor)
            for box in hio.read_label_file(label_file)
        ]
        hio.write_label_file(args.out / label_file.name, boxes)
        count += len(boxes)
    _write_run_metadata(args, args.out)
    print(f"expanded={count}")
    return 0


def cmd_tile(args: argparse.Namespace) -> int:
    annotated_images = args.out / "annotated" / "images"
    annotated_labels = args.out / "annotated" / "labels"
    background_images = args.out / "background" / "images"
    for folder in (annotated_images, annotated_labels, background_images):
        folder.mkdir(parents=True, exist_ok=True)
    n_background = n_annotated = n_labels = 0
    for image_path in _list_images(args.images):
        image = hio.read_image(image_path)
        height, width = image.shape[:2]
        geom = ImageGeometry(width_px=width, height_px=height)
        label_path = args.labels / (image_path.stem + ".txt")
        labels = hio.read_label_file(label_path) if label_path.exists() else []
        for plan in tiler.plan_tiles(geom, args.tile, args.step, image_path.stem):
            patch_labels = tiler.tile_labels(labels, geom, plan)
            patch = tiler.crop_patch(image, plan)
            stem = plan.patch_id
            if tiler.classify_patch(patch_labels) is tiler.PatchClass.BACKGROUND:
                hio.write_image(background_images / f"{stem}.png", patch)
                n_background += 1
            else:
                hio.write_image(annotated_images / f"{stem}.png", patch)
                hio.write_label_file(annotated_labels / f"{stem}.txt", patch_labels)
                n_annotated += 1
                n_labels += len(patch_labels)
    _write_run_metadata(args, args.out)
    print(f"background_patches={n_background}")
    print(f"annotated_patches={n_annotated}")
    print(f"labels_written={n_labels}")
    return 0


def cmd_extract_grains(args: argparse.Namespace) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    total = kept = blackened = lopsided = 0
    for image_path in _list_images(args.images):
        label_path = args.labels / (image_path.stem + ".txt")
        if not label_path.exists():
            continue
        image = hio.read_image_grey(image_path)
        crops = tiler.crop_grains(
            image,
            hio.read_label_file(label_path),
            source_id=image_path.stem,
            provenance=args.provenance,
            zero_fraction_threshold=args.zero_fraction,
        )
        for crop in crops:
            total += 1
            blackened += crop.blackened
            lopsided += crop.lopsided
            if crop.ok or args.include_flagged:
                hio.write_image(args.out / f"{crop.grain_id}.png", crop.pixels)
                kept += 1
    _write_run_metadata(args, args.out)
    print(f"total={total}")
    print(f"kept={kept}")
    print(f"blackened={blackened}")
    print(f"lopsided={lopsided}")
    return 0


def cmd_composite(args: argparse.Namespace) -> int:
    backgrounds = [(p.stem, p) for p in _list_images(args.backgrounds)]
    grains = [(p.stem, p) for p in _list_images(args.grains)]
    policy = compositor.PlacementPolicy(
        grains_per_patch_mean=args.mean_grains,
        max_pairwise_iou=args.max_iou,
        max_retries_per_grain=args.retries,
        feather_px=args.feather,
    )
    images_dir = args.out / "images"
    labels_dir = args.out / "labels"
    images_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)

    def write_out(record, pixels, labels):
        hio.write_image(images_dir / f"{record.composite_id}.png", pixels)
        hio.write_label_file(labels_dir / f"{record.composite_id}.txt", labels)

    records = compositor.generate_batch(
        backgrounds,
        grains,
        args.n,
        policy,
        args.seed,
        on_composite=write_out,
        jobs=args.jobs,
    )
    compositor.write_batch_ledger(args.out / "batch_ledger.tsv", records)
    duplicates = compositor.dedup_scan(records)
    _write_run_metadata(args, args.out)
    print(f"composites={len(records)}")
    print(f"total_grains={sum(r.grain_count() for r in records)}")
    print(f"duplicate_pairs={len(duplicates)}")
    return 0


def _read_item_list(path: Path) -> list[tuple[str, str]]:
    items = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise HoloforgeError(
                f"{path}: expected `image<TAB>label` per line, got {line!r}"
            )
        items.append((parts[0], parts[1]))
    return items


def _collect_items(
    list_file: Path | None, images_dir: Path | None, labels_dir: Path | None
) -> list[tuple[str, str]]:
    if list_file is not None:
        return _read_item_list(list_file)
    if images_dir is None or labels_dir is None:
        return []
    return [
        (str(p), str(labels_dir / (p.stem + ".txt"))) for p in _list_images(images_dir)
    ]


def cmd_assemble(args: argparse.Namespace) -> int:
    real_items = _collect_items(args.real_list, args.real_images, args.real_labels)
    if not real_items:
        raise HoloforgeError("no real items supplied (use --real-list or --real-images/--real-labels)")
    manifest = assembler.make_splits(real_items, args.seed, version=__version__)
    if args.train is not None:
        train = manifest.split_items("train")
        if len(train) < args.train:
            raise HoloforgeError(
                f"--train {args.train} exceeds the split's {len(train)} training items"
            )
        others = [item for item in manifest.items if item.split != "train"]
        manifest.items = train[: args.train] + others
    if args.ratio > 0:
        pool = _collect_items(
            args.synthetic_list, args.synthetic_images, args.synthetic_labels
        )
        if args.restrict_backgrounds_to_train:
            pool = _filter_pool_to_train_sources(pool, manifest, args.batch_ledger)
        manifest = assembler.mix_training(manifest, pool, args.ratio)
    else:
        manifest = assembler.mix_training(manifest, [], args.ratio)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    assembler.write_manifest(args.out, manifest)
    _write_run_metadata(args, args.out)
    for key, value in manifest.counts().items():
        print(f"{key}={value}")
    print(f"train_total={len(manifest.split_items('train'))}")
    return 0


def _filter_pool_to_train_sources(
    pool: list[tuple[str, str]],
    manifest: assembler.DatasetManifest,
    ledger_path: Path | None,
) -> list[tuple[str, str]]:
    """Leakage control: keep composites whose background stems from a training slide."""
    if ledger_path is None:
        raise HoloforgeError("--restrict-backgrounds-to-train needs --batch-ledger")
    background_of = {
        composite_id: background_id
        for composite_id, background_id, *_ in compositor.read_batch_ledger(ledger_path)
    }
    train_sources = {
        tiler.source_slide_id(Path(item.image_path).stem)
        for item in manifest.split_items("train")
    }
    kept = []
    for image_path, label_path in pool:
        background_id = background_of.get(Path(image_path).stem)
        if background_id is None:
            continue
        if tiler.source_slide_id(background_id) in train_sources:
            kept.append((image_path, label_path))
    return kept


def cmd_emit(args: argparse.Namespace) -> int:
    manifest = assembler.read_manifest(args.manifest)
    report = assembler.emit_dataset(manifest, args.out, link=args.link)
    _write_run_metadata(args, args.out)
    print(f"written={report.written}")
    print(f"unchanged={report.unchanged}")
    for split in assembler.SPLITS:
        print(f"items_{split}={report.per_split.get(split, 0)}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    manifest = assembler.read_manifest(args.manifest)
    report = assembler.dataset_stats(manifest)
    _print_report(report.as_dict(), args.json, args.out)
    return 0


def cmd_eval_map(args: argparse.Namespace) -> int:
    ground_truth = {
        path.stem: hio.read_label_file(path)
        for path in sorted(args.ground_truth.glob("*.txt"))
    }
    detections = [
        evaluator.Detection(image_id, category_id, box, confidence)
        for image_id, category_id, box, confidence in hio.read_detection_file(
            args.detections
        )
    ]
    report = evaluator.evaluate_detections(
        ground_truth, detections, args.iou, args.cutoff
    )
    if args.curve_out is not None:
        args.curve_out.parent.mkdir(parents=True, exist_ok=True)
        args.curve_out.write_text(
            "".join(
                f"{recall:.6f} {precision:.6f} {confidence:.6f}\n"
                for recall, precision, confidence in report.curve
            )
        )
    _print_report(report.as_dict(), args.json, args.out)
    return 0


def cmd_eval_fid(args: argparse.Namespace) -> int:
    set_a = evaluator.EmbeddingSet(hio.read_embedding_blob(args.a))
    set_b = evaluator.EmbeddingSet(hio.read_embedding_blob(args.b))
    fid = evaluator.frechet_distance(set_a, set_b, eps=args.eps)
    _print_report(
        {"fid": fid, "n_a": set_a.n, "n_b": set_b.n, "d": set_a.d},
        args.json,
        args.out,
    )
    return 0


def cmd_critic_filter(args: argparse.Namespace) -> int:
    samples = [
        evaluator.ScoredSample(sample_id, score)
        for sample_id, score in hio.read_scores_file(args.scores)
    ]
    kept = evaluator.critic_filter(samples, args.keep)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    hio.write_scores_file(args.out, [(s.sample_id, s.score) for s in kept])
    _write_run_metadata(args, args.out)
    print(f"kept={len(kept)}")
    print(f"discarded={len(samples) - len(kept)}")
    return 0


def cmd_toy_embed(args: argparse.Namespace) -> int:
    images = _list_images(args.images)
    if not images:
        raise HoloforgeError(f"no images found under {args.images}")
    rows = [evaluator.toy_embed(hio.read_image_grey(path)) for path in images]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    hio.write_embedding_blob(args.out, np.vstack(rows))
    _write_run_metadata(args, args.out)
    print(f"embedded={len(rows)}")
    print("dim=64")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="holoforge",
        description="Dual-modality dataset pipeline and evaluation toolkit",
    )
    parser.add_argument("--version", action="version", version=f"holoforge {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("fit-affine", help="least-squares affine from point pairs")
    p.add_argument("--pairs", type=Path, required=True, help="lines: src_x src_y dst_x dst_y")
    p.add_argument("--out", type=Path, required=True, help="transform file to write")
    p.set_defaults(func=cmd_fit_affine)

    p = sub.add_parser("transfer-labels", help="carry label files through an affine map")
    p.add_argument("--labels", type=Path, required=True, help="label file or directory")
    p.add_argument("--transform", type=Path, required=True)
    p.add_argument("--src-size", type=_parse_size, required=True, metavar="WxH")
    p.add_argument("--dst-size", type=_parse_size, required=True, metavar="WxH")
    p.add_argument("--min-inside", type=float, default=0.5,
                   help="minimum in-frame fraction of the mapped hull (default 0.5)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_transfer_labels)

    p = sub.add_parser("expand-boxes", help="grow box areas about their centers")
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--factor", type=float, required=True, help="area factor, e.g. 0.5 for +50%%")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_expand_boxes)

    p = sub.add_parser("tile", help="cut slides into patches and re-index labels")
    p.add_argument("--images", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--tile", type=int, default=tiler.DEFAULT_TILE_SIZE)
    p.add_argument("--step", type=int, default=tiler.DEFAULT_STEP)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("extract-grains", help="cut per-label crops with quality filters")
    p.add_argument("--images", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--provenance", choices=("manual", "automated"), default="automated")
    p.add_argument("--zero-fraction", type=float, default=tiler.DEFAULT_ZERO_FRACTION,
                   help="blackened-crop threshold (default 0.60)")
    p.add_argument("--include-flagged", action="store_true",
                   help="also write blackened/lopsided crops")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_extract_grains)

    p = sub.add_parser("composite", help="alpha-blend grains onto background patches")
    p.add_argument("--backgrounds", type=Path, required=True)
    p.add_argument("--grains", type=Path, required=True)
    p.add_argument("--n", type=int, required=True, help="number of composites")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mean-grains", type=float, default=compositor.DEFAULT_GRAINS_PER_PATCH_MEAN)
    p.add_argument("--max-iou", type=float, default=0.2)
    p.add_argument("--retries", type=int, default=30)
    p.add_argument("--feather", type=int, default=8)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_composite)

    p = sub.add_parser("assemble", help="split real items and mix in composites")
    p.add_argument("--real-images", type=Path)
    p.add_argument("--real-labels", type=Path)
    p.add_argument("--real-list", type=Path, help="tsv: image<TAB>label per line")
    p.add_argument("--synthetic-images", type=Path)
    p.add_argument("--synthetic-labels", type=Path)
    p.add_argument("--synthetic-list", type=Path)
    p.add_argument("--ratio", type=float, required=True,
                   help="composites per real training item, e.g. 1.5")
    p.add_argument("--train", type=int, default=None,
                   help="truncate the training split to exactly N real items")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--restrict-backgrounds-to-train", action="store_true",
                   help="drop composites built on non-training-slide backgrounds")
    p.add_argument("--batch-ledger", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True, help="manifest file to write")
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("emit", help="materialize a manifest as a dataset tree")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--link", action="store_true", help="hard-link instead of copy")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("stats", help="manifest and label statistics")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("eval-map", help="mAP50/precision/recall from detection files")
    p.add_argument("--ground-truth", type=Path, required=True, help="directory of label files")
    p.add_argument("--detections", type=Path, required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--cutoff", type=float, default=0.0,
                   help="confidence cutoff for the operating point")
    p.add_argument("--curve-out", type=Path, default=None,
                   help="write `recall precision confidence` rows")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_eval_map)

    p = sub.add_parser("eval-fid", help="Fréchet distance between two embedding blobs")
    p.add_argument("--a", type=Path, required=True)
    p.add_argument("--b", type=Path, required=True)
    p.add_argument("--eps", type=float, default=evaluator.DEFAULT_FID_EPS)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_eval_fid)

    p = sub.add_parser("critic-filter", help="keep the top scores, drop the rest")
    p.add_argument("--scores", type=Path, required=True, help="lines: sample_id score")
    p.add_argument("--keep", type=float, default=0.5)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_critic_filter)

    p = sub.add_parser("toy-embed", help="64-dim downsample embeddings for a folder")
    p.add_argument("--images", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="EMB1 blob to write")
    p.set_defaults(func=cmd_toy_embed)

    return parser


def run(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("HOLOFORGE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except HoloforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {MissingSource(exc.filename or exc)}", file=sys.stderr)
        return 1
    except ValueError as exc:  # malformed input files
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
