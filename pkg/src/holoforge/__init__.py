"""Dataset pipeline and evaluation numerics for dual-modality pollen detection."""

__version__ = "0.1.0"

from .errors import HoloforgeError
from .geometry import (
    AffineTransform,
    BBox,
    ImageGeometry,
    aspect_ratio_ok,
    expand_bbox_area,
    fit_affine,
    iou,
    transform_bbox,
)

__all__ = [
    "AffineTransform",
    "BBox",
    "HoloforgeError",
    "ImageGeometry",
    "__version__",
    "aspect_ratio_ok",
    "expand_bbox_area",
    "fit_affine",
    "iou",
    "transform_bbox",
]
