"""Split construction, real:synthetic mixing, dataset emission and statistics.

Splits are 70/15/15 by count over a canonically sorted then seed-shuffled item
list, so membership is deterministic and independent of input order. Training
floors at 70%, validation at 15%, and the test split absorbs the remainder
(4363 items -> 3054/654/655); when the validation floor is zero, one item
moves over from training so every split is populated. Composite items are
only ever appended to the training split.
"""

from __future__ import annotations

import hashlib
import math
import re
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as hio
from .errors import (
    CollisionAtDestination,
    HoloforgeError,
    InsufficientSyntheticPool,
    MissingSource,
    TooFewItems,
)

SPLITS = ("train", "val", "test")
CATEGORY_NAMES = ("pollen",)

TRAIN_FRACTION = 0.70
VAL_FRACTION = 0.15


@dataclass(frozen=True)
class ManifestItem:
    image_path: str
    label_path: str
    provenance: str  # "real" | "composite"
    split: str  # "train" | "val" | "test"


@dataclass
class DatasetManifest:
    """Declarative listing of dataset items with split and provenance."""

    items: list[ManifestItem]
    ratio: str
    seed: int
    version: str

    def split_items(self, split: str) -> list[ManifestItem]:
        return [item for item in self.items if item.split == split]

    def counts(self) -> dict[str, int]:
        out = {split: 0 for split in SPLITS}
        out.update({"real": 0, "composite": 0})
        for item in self.items:
            out[item.split] += 1
            out[item.provenance] += 1
        return out

    def validate(self) -> None:
        seen: dict[str, str] = {}
        for item in self.items:
            if item.split not in SPLITS:
                raise HoloforgeError(f"unknown split {item.split!r}")
            if item.provenance not in ("real", "composite"):
                raise HoloforgeError(f"unknown provenance {item.provenance!r}")
            if item.provenance == "composite" and item.split != "train":
                raise HoloforgeError(
                    f"composite item {item.image_path} in split {item.split}"
                )
            prior = seen.get(item.image_path)
            if prior is not None:
                raise HoloforgeError(
                    f"item {item.image_path} appears in both {prior} and {item.split}"
                )
            seen[item.image_path] = item.split


def split_sizes(n_items: int) -> tuple[int, int, int]:
    """Train/val/test counts for an n-item pool."""
    if n_items < 3:
        raise TooFewItems(f"need at least 3 items to split, got {n_items}")
    n_train = math.floor(n_items * TRAIN_FRACTION)
    n_val = math.floor(n_items * VAL_FRACTION)
    n_test = n_items - n_train - n_val
    if n_val == 0:
        n_train -= 1
        n_val = 1
    return n_train, n_val, n_test


def make_splits(
    real_items: list[tuple[str, str]], seed: int, version: str = ""
) -> DatasetManifest:
    """Partition real (image, label) pairs into train/val/test.

    Items are sorted by image path before the seeded shuffle, so membership
    does not depend on listing order.
    """
    paths = [str(img) for img, _ in real_items]
    if len(set(paths)) != len(paths):
        raise HoloforgeError("duplicate image paths in the real item pool")
    n_train, n_val, _ = split_sizes(len(real_items))
    ordered = sorted(real_items, key=lambda pair: str(pair[0]))
    perm = np.random.default_rng(seed).permutation(len(ordered))
    shuffled = [ordered[i] for i in perm]
    items = []
    for index, (image_path, label_path) in enumerate(shuffled):
        if index < n_train:
            split = "train"
        elif index < n_train + n_val:
            split = "val"
        else:
            split = "test"
        items.append(
            ManifestItem(str(image_path), str(label_path), "real", split)
        )
    manifest = DatasetManifest(items=items, ratio="1:0", seed=seed, version=version)
    manifest.validate()
    return manifest


def format_ratio(ratio: float) -> str:
    return f"1:{ratio:g}"


def mix_training(
    manifest: DatasetManifest,
    synthetic_pool: list[tuple[str, str]],
    ratio: float,
) -> DatasetManifest:
    """Append round(ratio * train count) composites to the training split.

    Pool items are sorted then shuffled under a sub-stream of the manifest
    seed; val and test are untouched. Raises InsufficientSyntheticPool when
    the pool cannot cover the ratio.
    """
    if ratio < 0:
        raise ValueError(f"ratio must be >= 0, got {ratio}")
    train_count = len(manifest.split_items("train"))
    needed = round(ratio * train_count)
    if needed == 0:
        return DatasetManifest(
            items=list(manifest.items),
            ratio=format_ratio(ratio),
            seed=manifest.seed,
            version=manifest.version,
        )
    if len(synthetic_pool) < needed:
        raise InsufficientSyntheticPool(
            f"ratio {ratio} over {train_count} real items needs {needed} composites, "
            f"pool has {len(synthetic_pool)}"
        )
    ordered = sorted(synthetic_pool, key=lambda pair: str(pair[0]))
    perm = np.random.default_rng([manifest.seed, 1]).permutation(len(ordered))
    chosen = [ordered[i] for i in perm[:needed]]
    items = list(manifest.items) + [
        ManifestItem(str(img), str(lbl), "composite", "train") for img, lbl in chosen
    ]
    mixed = DatasetManifest(
        items=items,
        ratio=format_ratio(ratio),
        seed=manifest.seed,
        version=manifest.version,
    )
    mixed.validate()
    return mixed


# ---------------------------------------------------------------- manifests

_HEADER = re.compile(
    r"^#\s*holoforge-manifest\s+ratio=(?P<ratio>\S+)\s+seed=(?P<seed>-?\d+)\s+version=(?P<version>\S*)\s*$"
)


def write_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    lines = [
        f"# holoforge-manifest ratio={manifest.ratio} seed={manifest.seed} "
        f"version={manifest.version}"
    ]
    lines += [
        "\t".join([item.split, item.provenance, item.image_path, item.label_path])
        for item in manifest.items
    ]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_manifest(path: str | Path) -> DatasetManifest:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise HoloforgeError(f"{path}: empty manifest")
    header = _HEADER.match(lines[0])
    if header is None:
        raise HoloforgeError(f"{path}: missing manifest header")
    items = []
    for line in lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise HoloforgeError(f"{path}: malformed manifest row {line!r}")
        split, provenance, image_path, label_path = parts
        items.append(ManifestItem(image_path, label_path, provenance, split))
    return DatasetManifest(
        items=items,
        ratio=header.group("ratio"),
        seed=int(header.group("seed")),
        version=header.group("version"),
    )


# ---------------------------------------------------------------- emission

@dataclass
class EmitReport:
    written: int = 0
    unchanged: int = 0
    per_split: dict[str, int] = field(default_factory=dict)

    def changed(self) -> int:
        return self.written


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _materialize(src: Path, dst: Path, link: bool) -> bool:
    """Copy or hard-link src to dst; returns True when dst was (re)written."""
    if not src.exists():
        raise MissingSource(str(src))
    if dst.exists():
        if _file_digest(dst) == _file_digest(src):
            return False
        raise CollisionAtDestination(f"{dst} exists with different content")
    if link:
        try:
            dst.hardlink_to(src)
        except OSError:
            shutil.copy2(src, dst)
    else:
        shutil.copy2(src, dst)
    return True


def emit_dataset(
    manifest: DatasetManifest, output_root: str | Path, link: bool = False
) -> EmitReport:
    """Materialize the manifest under `<root>/{train,val,test}/{images,labels}`.

    Re-emission over an existing tree is idempotent: unchanged files are
    skipped, content mismatches raise CollisionAtDestination. Label files are
    renamed to the image stem so the per-patch stem convention holds.
    """
    manifest.validate()
    root = Path(output_root)
    for split in SPLITS:
        (root / split / "images").mkdir(parents=True, exist_ok=True)
        (root / split / "labels").mkdir(parents=True, exist_ok=True)
    report = EmitReport(per_split={split: 0 for split in SPLITS})
    for item in manifest.items:
        image_src = Path(item.image_path)
        label_src = Path(item.label_path)
        image_dst = root / item.split / "images" / image_src.name
        label_dst = root / item.split / "labels" / (image_src.stem + ".txt")
        for src, dst in ((image_src, image_dst), (label_src, label_dst)):
            if _materialize(src, dst, link):
                report.written += 1
            else:
                report.unchanged += 1
        report.per_split[item.split] += 1
    descriptor = root / "descriptor.txt"
    body = "".join(
        [f"{split}={split}/images\n" for split in SPLITS]
        + [f"categories={','.join(CATEGORY_NAMES)}\n"]
    )
    if not descriptor.exists() or descriptor.read_text() != body:
        descriptor.write_text(body)
    return report


# ---------------------------------------------------------------- statistics

@dataclass
class StatsReport:
    items_per_split: dict[str, int]
    items_per_provenance: dict[str, int]
    label_count: int
    box_width_mean_px: float
    box_width_std_px: float
    box_height_mean_px: float
    box_height_std_px: float
    missing_files: int

    def as_dict(self) -> dict[str, object]:
        out: dict[str, object] = {}
        for split in SPLITS:
            out[f"items_{split}"] = self.items_per_split.get(split, 0)
        for provenance in ("real", "composite"):
            out[f"items_{provenance}"] = self.items_per_provenance.get(provenance, 0)
        out["label_count"] = self.label_count
        out["box_width_mean_px"] = self.box_width_mean_px
        out["box_width_std_px"] = self.box_width_std_px
        out["box_height_mean_px"] = self.box_height_mean_px
        out["box_height_std_px"] = self.box_height_std_px
        out["missing_files"] = self.missing_files
        return out


def dataset_stats(manifest: DatasetManifest) -> StatsReport:
    """Tally items, labels, and pixel-space box dimensions (population std).

    Items whose image or label file is unreadable are counted in
    `missing_files` and excluded from the pixel statistics.
    """
    widths: list[float] = []
    heights: list[float] = []
    label_count = 0
    missing = 0
    per_split = {split: 0 for split in SPLITS}
    per_provenance = {"real": 0, "composite": 0}
    for item in manifest.items:
        per_split[item.split] += 1
        per_provenance[item.provenance] += 1
        image_path = Path(item.image_path)
        label_path = Path(item.label_path)
        if not image_path.exists() or not label_path.exists():
            missing += 1
            continue
        width_px, height_px = hio.image_geometry(image_path)
        for box in hio.read_label_file(label_path):
            label_count += 1
            widths.append(box.w * width_px)
            heights.append(box.h * height_px)
    return StatsReport(
        items_per_split=per_split,
        items_per_provenance=per_provenance,
        label_count=label_count,
        box_width_mean_px=float(np.mean(widths)) if widths else 0.0,
        box_width_std_px=float(np.std(widths)) if widths else 0.0,
        box_height_mean_px=float(np.mean(heights)) if heights else 0.0,
        box_height_std_px=float(np.std(heights)) if heights else 0.0,
        missing_files=missing,
    )
