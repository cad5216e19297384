"""Normalized bounding-box algebra and affine maps between image frames.

Boxes are stored center-size normalized to the image they live on, which is
the layout the label files use. All operations here are pure functions over
value types and safe to call from concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, FewerThanThreePairs

_SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class ImageGeometry:
    """Pixel dimensions of one image frame."""

    width_px: int
    height_px: int

    def __post_init__(self) -> None:
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError(
                f"image dimensions must be positive, got {self.width_px}x{self.height_px}"
            )


@dataclass(frozen=True)
class BBox:
    """One detection label: normalized center (cx, cy) and extents (w, h).

    Centers lie in [0, 1], extents in (0, 1]. The spanned rectangle may
    overhang the unit square until a clamping operation is applied.
    """

    category_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.category_id < 0:
            raise ValueError(f"category_id must be non-negative, got {self.category_id}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"center ({self.cx}, {self.cy}) outside [0,1]^2")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"extents ({self.w}, {self.h}) outside (0,1]")

    def extent(self) -> tuple[float, float, float, float]:
        """Normalized (x1, y1, x2, y2) corners of the spanned rectangle."""
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    @classmethod
    def from_extent(
        cls, category_id: int, x1: float, y1: float, x2: float, y2: float
    ) -> "BBox":
        return cls(category_id, (x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    def corners_px(self, geom: ImageGeometry) -> np.ndarray:
        """The four pixel-space corners on `geom`, shape (4, 2)."""
        x1, y1, x2, y2 = self.extent()
        w, h = float(geom.width_px), float(geom.height_px)
        return np.array(
            [[x1 * w, y1 * h], [x2 * w, y1 * h], [x2 * w, y2 * h], [x1 * w, y2 * h]]
        )

    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class AffineTransform:
    """Planar map (x, y) -> (a*x + b*y + tx, c*x + d*y + ty)."""

    a: float
    b: float
    tx: float
    c: float
    d: float
    ty: float

    def __post_init__(self) -> None:
        if abs(self.a * self.d - self.b * self.c) <= _SINGULAR_TOL:
            raise DegenerateConfiguration("affine transform is singular")

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    @classmethod
    def translation(cls, tx: float, ty: float) -> "AffineTransform":
        return cls(1.0, 0.0, tx, 0.0, 1.0, ty)

    @classmethod
    def scaling(cls, sx: float, sy: float | None = None) -> "AffineTransform":
        return cls(sx, 0.0, 0.0, 0.0, sx if sy is None else sy, 0.0)

    def coefficients(self) -> tuple[float, float, float, float, float, float]:
        return (self.a, self.b, self.tx, self.c, self.d, self.ty)

    def apply(self, x: float, y: float) -> tuple[float, float]:
        return (self.a * x + self.b * y + self.tx, self.c * x + self.d * y + self.ty)

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        """Map an (n, 2) pixel point array through the transform."""
        pts = np.asarray(points, dtype=float)
        out = np.empty_like(pts)
        out[:, 0] = self.a * pts[:, 0] + self.b * pts[:, 1] + self.tx
        out[:, 1] = self.c * pts[:, 0] + self.d * pts[:, 1] + self.ty
        return out

    def compose(self, inner: "AffineTransform") -> "AffineTransform":
        """Return the map applying `inner` first, then this transform."""
        return AffineTransform(
            a=self.a * inner.a + self.b * inner.c,
            b=self.a * inner.b + self.b * inner.d,
            tx=self.a * inner.tx + self.b * inner.ty + self.tx,
            c=self.c * inner.a + self.d * inner.c,
            d=self.c * inner.b + self.d * inner.d,
            ty=self.c * inner.tx + self.d * inner.ty + self.ty,
        )

    def invert(self) -> "AffineTransform":
        det = self.a * self.d - self.b * self.c
        ia, ib = self.d / det, -self.b / det
        ic, id_ = -self.c / det, self.a / det
        return AffineTransform(
            a=ia,
            b=ib,
            tx=-(ia * self.tx + ib * self.ty),
            c=ic,
            d=id_,
            ty=-(ic * self.tx + id_ * self.ty),
        )


def fit_affine(
    correspondences: list[tuple[tuple[float, float], tuple[float, float]]],
) -> AffineTransform:
    """Fit the affine map minimizing squared residuals over point pairs.

    Args:
        correspondences: (source pixel point, target pixel point) pairs.

    Returns:
        The least-squares transform; exact for three non-collinear pairs.

    Raises:
        FewerThanThreePairs: fewer than three pairs supplied.
        DegenerateConfiguration: collinear or coincident source points, or a
            fitted map that collapses the plane (singular).
    """
    if len(correspondences) < 3:
        raise FewerThanThreePairs(
            f"need at least 3 correspondences, got {len(correspondences)}"
        )
    src = np.array([p[0] for p in correspondences], dtype=float)
    dst = np.array([p[1] for p in correspondences], dtype=float)
    design = np.column_stack([src[:, 0], src[:, 1], np.ones(len(src))])
    if np.linalg.matrix_rank(design) < 3:
        raise DegenerateConfiguration("source points are collinear or coincident")
    if len(src) == 3:
        # Exactly determined: direct solve interpolates with zero residual.
        row_x = np.linalg.solve(design, dst[:, 0])
        row_y = np.linalg.solve(design, dst[:, 1])
    else:
        row_x, *_ = np.linalg.lstsq(design, dst[:, 0], rcond=None)
        row_y, *_ = np.linalg.lstsq(design, dst[:, 1], rcond=None)
    return AffineTransform(
        a=float(row_x[0]),
        b=float(row_x[1]),
        tx=float(row_x[2]),
        c=float(row_y[0]),
        d=float(row_y[1]),
        ty=float(row_y[2]),
    )


def transform_bbox(
    box: BBox,
    src: ImageGeometry,
    transform: AffineTransform,
    dst: ImageGeometry,
    min_inside_fraction: float = 0.5,
) -> BBox | None:
    """Carry a box from the `src` frame into the `dst` frame.

    Maps the four pixel corners, takes the axis-aligned hull, and clips it to
    the destination frame. Returns None (discarded) when the hull overlaps the
    frame by less than `min_inside_fraction` of its own area; discarding is a
    normal, counted outcome, not an error. A hull entirely outside the frame
    is always discarded.
    """
    mapped = transform.apply_points(box.corners_px(src))
    hx1, hy1 = mapped.min(axis=0)
    hx2, hy2 = mapped.max(axis=0)
    hull_area = (hx2 - hx1) * (hy2 - hy1)
    if hull_area <= 0.0:
        return None
    w, h = float(dst.width_px), float(dst.height_px)
    ix1, iy1 = max(hx1, 0.0), max(hy1, 0.0)
    ix2, iy2 = min(hx2, w), min(hy2, h)
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    if inter <= 0.0 or inter / hull_area < min_inside_fraction:
        return None
    return BBox.from_extent(box.category_id, ix1 / w, iy1 / h, ix2 / w, iy2 / h)


def expand_bbox_area(
    box: BBox, area_factor: float, geom: ImageGeometry | None = None
) -> BBox:
    """Grow a box's area by `area_factor` about its center, then clamp.

    Both extents scale by sqrt(1 + area_factor), so the pre-clamp area is
    exactly (1 + area_factor) times the original. Expansion in normalized
    coordinates is resolution independent; `geom` is accepted for callers that
    track the frame alongside the box but does not change the result.
    """
    if area_factor < 0:
        raise ValueError(f"area_factor must be >= 0, got {area_factor}")
    scale = math.sqrt(1.0 + area_factor)
    half_w, half_h = box.w * scale / 2.0, box.h * scale / 2.0
    return BBox.from_extent(
        box.category_id,
        max(box.cx - half_w, 0.0),
        max(box.cy - half_h, 0.0),
        min(box.cx + half_w, 1.0),
        min(box.cy + half_h, 1.0),
    )


def aspect_ratio_ok(width_px: float, height_px: float) -> bool:
    """True iff height:width lies within [1:2, 2:1], boundaries kept."""
    if width_px <= 0 or height_px <= 0:
        raise ValueError("dimensions must be positive")
    ratio = height_px / width_px
    return 0.5 <= ratio <= 2.0


def rect_iou(
    a: tuple[float, float, float, float], b: tuple[float, float, float, float]
) -> float:
    """Intersection over union of two (x1, y1, x2, y2) rectangles."""
    ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
    ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    if inter <= 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes on the same frame, in [0, 1]."""
    return rect_iou(a.extent(), b.extent())
