"""Sliding-window tiling of high-resolution slides and grain-crop extraction.

Tiles default to 640x640 with a 320-pixel stride; a tail tile anchored at
`dim - tile_size` guarantees full coverage when the stride does not divide
the span. Labels are assigned to every tile whose half-open pixel rectangle
[origin, origin + tile) contains the label center, so with overlapping tiles
one source label can appear in several patches; dedup/statistics passes count
unique source labels.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

import numpy as np

from .errors import TileLargerThanImage
from .geometry import BBox, ImageGeometry, aspect_ratio_ok

DEFAULT_TILE_SIZE = 640
DEFAULT_STEP = 320

# Blackened-crop calibration: a crop counts as blackened when more than 60%
# of its pixels fall below intensity 2/255.
DEFAULT_INTENSITY_FLOOR = 2.0 / 255.0
DEFAULT_ZERO_FRACTION = 0.60


@dataclass(frozen=True)
class PatchPlan:
    """One tile origin within a source image."""

    source_id: str
    origin_x: int
    origin_y: int
    tile_size: int = DEFAULT_TILE_SIZE
    step: int = DEFAULT_STEP

    def __post_init__(self) -> None:
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")
        if self.origin_x < 0 or self.origin_y < 0:
            raise ValueError("tile origins must be non-negative")

    @property
    def patch_id(self) -> str:
        return patch_name(self.source_id, self.origin_x, self.origin_y)


class PatchClass(enum.Enum):
    BACKGROUND = "background"
    ANNOTATED = "annotated"


@dataclass
class GrainCrop:
    """A single grain image cut from a slide at its label rectangle."""

    grain_id: str
    source_id: str
    rect: tuple[int, int, int, int]  # pixel (x1, y1, x2, y2) on the source
    pixels: np.ndarray
    provenance: str  # "manual" | "automated"
    blackened: bool
    lopsided: bool

    @property
    def ok(self) -> bool:
        return not (self.blackened or self.lopsided)


def patch_name(source_id: str, origin_x: int, origin_y: int) -> str:
    """Canonical patch stem: `<image-id>_x<origin_x>_y<origin_y>`."""
    return f"{source_id}_x{origin_x}_y{origin_y}"


_PATCH_STEM = re.compile(r"^(?P<source>.+)_x(?P<x>\d+)_y(?P<y>\d+)$")


def source_slide_id(patch_stem: str) -> str:
    """Recover the source image id from a patch stem; identity for non-patches."""
    match = _PATCH_STEM.match(patch_stem)
    return match.group("source") if match else patch_stem


def _axis_origins(dim: int, tile_size: int, step: int) -> list[int]:
    origins = list(range(0, dim - tile_size + 1, step))
    if origins[-1] + tile_size < dim:
        origins.append(dim - tile_size)
    return origins


def plan_tiles(
    geom: ImageGeometry,
    tile_size: int = DEFAULT_TILE_SIZE,
    step: int = DEFAULT_STEP,
    source_id: str = "",
) -> list[PatchPlan]:
    """Plan tile origins covering the whole image.

    Raises:
        TileLargerThanImage: tile exceeds the image along either axis.
    """
    if tile_size > geom.width_px or tile_size > geom.height_px:
        raise TileLargerThanImage(
            f"tile {tile_size} exceeds image {geom.width_px}x{geom.height_px}"
        )
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    xs = _axis_origins(geom.width_px, tile_size, step)
    ys = _axis_origins(geom.height_px, tile_size, step)
    return [
        PatchPlan(source_id=source_id, origin_x=x, origin_y=y, tile_size=tile_size, step=step)
        for y in ys
        for x in xs
    ]


def tile_labels(
    labels: list[BBox], src: ImageGeometry, plan: PatchPlan
) -> list[BBox]:
    """Re-index source labels into one patch frame.

    A label belongs to the patch iff its pixel center falls in the half-open
    rectangle [origin, origin + tile). Assigned boxes are clipped to the patch
    and renormalized to the tile size.
    """
    out = []
    w, h = float(src.width_px), float(src.height_px)
    tile = float(plan.tile_size)
    ox, oy = float(plan.origin_x), float(plan.origin_y)
    for box in labels:
        px, py = box.cx * w, box.cy * h
        if not (ox <= px < ox + tile and oy <= py < oy + tile):
            continue
        x1, y1, x2, y2 = box.extent()
        cx1 = max(x1 * w - ox, 0.0)
        cy1 = max(y1 * h - oy, 0.0)
        cx2 = min(x2 * w - ox, tile)
        cy2 = min(y2 * h - oy, tile)
        if cx2 <= cx1 or cy2 <= cy1:
            continue
        out.append(
            BBox.from_extent(
                box.category_id, cx1 / tile, cy1 / tile, cx2 / tile, cy2 / tile
            )
        )
    return out


def classify_patch(labels_in_patch: list[BBox]) -> PatchClass:
    """Background iff the patch ended up with zero labels."""
    return PatchClass.BACKGROUND if not labels_in_patch else PatchClass.ANNOTATED


def crop_patch(image: np.ndarray, plan: PatchPlan) -> np.ndarray:
    y0, x0 = plan.origin_y, plan.origin_x
    return image[y0 : y0 + plan.tile_size, x0 : x0 + plan.tile_size].copy()


def is_blackened(
    crop: np.ndarray,
    zero_fraction_threshold: float = DEFAULT_ZERO_FRACTION,
    intensity_floor: float = DEFAULT_INTENSITY_FLOOR,
) -> bool:
    """True iff too many pixels sit below the intensity floor.

    Accepts uint8 crops (intensities pixel/255) or float crops already in
    [0, 1]. The crop must be non-empty.
    """
    arr = np.asarray(crop)
    if arr.size == 0:
        raise ValueError("crop is empty")
    values = arr.astype(np.float64) / 255.0 if arr.dtype.kind in "ui" else arr
    fraction = float(np.mean(values < intensity_floor))
    return fraction > zero_fraction_threshold


def crop_grains(
    image: np.ndarray,
    labels: list[BBox],
    source_id: str = "",
    provenance: str = "automated",
    zero_fraction_threshold: float = DEFAULT_ZERO_FRACTION,
    intensity_floor: float = DEFAULT_INTENSITY_FLOOR,
) -> list[GrainCrop]:
    """Cut one crop per label and attach quality flags.

    Output count always equals the label count; filtering on the flags is the
    caller's decision.
    """
    height, width = image.shape[:2]
    geom = ImageGeometry(width_px=width, height_px=height)
    crops = []
    for i, box in enumerate(labels):
        x1, y1, x2, y2 = box.extent()
        px1 = int(round(x1 * geom.width_px))
        py1 = int(round(y1 * geom.height_px))
        px2 = int(round(x2 * geom.width_px))
        py2 = int(round(y2 * geom.height_px))
        px1 = min(max(px1, 0), width - 1)
        py1 = min(max(py1, 0), height - 1)
        # Degenerate rounding still yields a 1-px crop.
        px2 = min(max(px2, px1 + 1), width)
        py2 = min(max(py2, py1 + 1), height)
        pixels = image[py1:py2, px1:px2].copy()
        crops.append(
            GrainCrop(
                grain_id=f"{source_id}_g{i:05d}" if source_id else f"g{i:05d}",
                source_id=source_id,
                rect=(px1, py1, px2, py2),
                pixels=pixels,
                provenance=provenance,
                blackened=is_blackened(
                    pixels, zero_fraction_threshold, intensity_floor
                ),
                lopsided=not aspect_ratio_ok(px2 - px1, py2 - py1),
            )
        )
    return crops
