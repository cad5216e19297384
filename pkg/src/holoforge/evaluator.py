"""Detection metrics, Fréchet distance between embedding sets, critic filter.

Average precision uses all-points interpolation: precision at each recall
level is replaced by the maximum precision at any recall at or beyond it, and
the envelope is integrated over the recall steps. The Fréchet distance
regularizes both covariance matrices with eps*I once, up front, so identical
sets score exactly zero; the matrix square root goes through the symmetric
form sqrt(B)^T A sqrt(B) and an eigendecomposition rather than a general
nonsymmetric solver.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    IndefiniteProduct,
    NonFiniteInput,
    ZeroGroundTruth,
)
from .geometry import BBox, iou

EIGENVALUE_CLAMP_TOL = 1e-6
DEFAULT_FID_EPS = 1e-6

# Covariance estimates degrade visibly below this many samples per dimension;
# mirrors the gap observed between the 10k and 60k sample protocols.
SAMPLES_PER_DIM_WARNING = 10


@dataclass(frozen=True)
class Detection:
    """One predicted box with its confidence."""

    image_id: str
    category_id: int
    box: BBox
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class ScoredSample:
    sample_id: str
    score: float


class EmbeddingSet:
    """An n x d sample matrix with its fitted mean and covariance."""

    def __init__(self, samples: np.ndarray):
        mat = np.asarray(samples, dtype=np.float64)
        if mat.ndim != 2:
            raise ValueError(f"samples must be 2-D, got shape {mat.shape}")
        if mat.shape[0] < 2:
            raise ValueError("need at least 2 samples to fit a covariance")
        if not np.isfinite(mat).all():
            raise NonFiniteInput("embedding matrix contains non-finite values")
        self.samples = mat
        self.mean = mat.mean(axis=0)
        self.covariance = np.atleast_2d(np.cov(mat, rowvar=False))

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]


def match_detections(
    ground_truth: list[BBox],
    detections: list[Detection],
    iou_threshold: float = 0.5,
) -> list[bool]:
    """Greedy TP/FP assignment for one image, flags aligned with the input order.

    Detections are processed in descending confidence (confidence ties keep
    input order). Each one is TP iff its best-IoU *unmatched* ground truth
    reaches the threshold; that ground truth is then consumed. IoU ties
    between ground truths resolve by box coordinates, so the outcome does not
    depend on ground-truth ordering.
    """
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].confidence, i))
    available = list(range(len(ground_truth)))
    flags = [False] * len(detections)
    for det_index in order:
        det = detections[det_index]
        best = None
        for gt_index in available:
            gt = ground_truth[gt_index]
            candidate = (iou(gt, det.box), (-gt.cx, -gt.cy, -gt.w, -gt.h))
            if best is None or candidate > best[0]:
                best = (candidate, gt_index)
        if best is not None and best[0][0] >= iou_threshold:
            flags[det_index] = True
            available.remove(best[1])
    return flags


def average_precision_50(
    flags: "list[bool] | np.ndarray",
    confidences: "list[float] | np.ndarray",
    total_ground_truth: int,
) -> float:
    """Area under the all-points precision envelope over recall.

    Flags and confidences span all images; sorting is global, stable in the
    input order for confidence ties.
    """
    if total_ground_truth < 1:
        raise ZeroGroundTruth("average precision needs at least one ground truth")
    flags = np.asarray(flags, dtype=bool)
    confidences = np.asarray(confidences, dtype=np.float64)
    if flags.shape != confidences.shape:
        raise ValueError("flags and confidences must align")
    if int(flags.sum()) > total_ground_truth:
        raise ValueError(
            f"{int(flags.sum())} true positives exceed {total_ground_truth} ground truths"
        )
    if flags.size == 0:
        return 0.0
    order = np.argsort(-confidences, kind="stable")
    tp = flags[order].astype(np.float64)
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / total_ground_truth
    precision = cum_tp / (cum_tp + cum_fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    previous_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - previous_recall) * envelope))


def precision_recall_at(
    flags: "list[bool] | np.ndarray",
    confidences: "list[float] | np.ndarray",
    total_ground_truth: int,
    confidence_cutoff: float = 0.0,
) -> tuple[float, float]:
    """Operating-point precision and recall at `confidence >= cutoff`.

    With no detections above the cutoff the point is (1.0, 0.0) by convention.
    """
    flags = np.asarray(flags, dtype=bool)
    confidences = np.asarray(confidences, dtype=np.float64)
    kept = confidences >= confidence_cutoff
    n_kept = int(kept.sum())
    if n_kept == 0:
        return (1.0, 0.0)
    tp = int(flags[kept].sum())
    recall = tp / total_ground_truth if total_ground_truth > 0 else 0.0
    return (tp / n_kept, recall)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    if eigenvalues.min() < -EIGENVALUE_CLAMP_TOL:
        raise IndefiniteProduct(
            f"matrix eigenvalue {eigenvalues.min():.3e} below clamp tolerance"
        )
    rooted = np.sqrt(np.clip(eigenvalues, 0.0, None))
    return (eigenvectors * rooted) @ eigenvectors.T


def frechet_distance(
    a: EmbeddingSet, b: EmbeddingSet, eps: float = DEFAULT_FID_EPS
) -> float:
    """Fréchet distance between the Gaussian fits of two embedding sets.

    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}) with both
    covariances regularized to S + eps*I up front. The product square-root
    trace is computed from the eigenvalues of sqrt(S_b) S_a sqrt(S_b), which
    is symmetric PSD and shares the product's spectrum. Eigenvalues below the
    clamp tolerance raise IndefiniteProduct; small negatives clamp to zero,
    as does a tiny negative total.
    """
    if a.d != b.d:
        raise DimensionMismatch(f"dimension mismatch: {a.d} vs {b.d}")
    for label, emb in (("a", a), ("b", b)):
        if emb.n < SAMPLES_PER_DIM_WARNING * emb.d:
            warnings.warn(
                f"embedding set {label} has n={emb.n} < {SAMPLES_PER_DIM_WARNING}*d="
                f"{SAMPLES_PER_DIM_WARNING * emb.d}; covariance estimate may be poor",
                stacklevel=2,
            )
    identity = np.eye(a.d)
    sigma_a = a.covariance + eps * identity
    sigma_b = b.covariance + eps * identity
    sqrt_b = _psd_sqrt(sigma_b)
    inner = sqrt_b @ sigma_a @ sqrt_b
    inner = (inner + inner.T) / 2.0
    eigenvalues = np.linalg.eigvalsh(inner)
    if eigenvalues.min() < -EIGENVALUE_CLAMP_TOL:
        raise IndefiniteProduct(
            f"product eigenvalue {eigenvalues.min():.3e} below clamp tolerance"
        )
    trace_sqrt = float(np.sqrt(np.clip(eigenvalues, 0.0, None)).sum())
    mean_diff = a.mean - b.mean
    value = (
        float(mean_diff @ mean_diff)
        + float(np.trace(sigma_a))
        + float(np.trace(sigma_b))
        - 2.0 * trace_sqrt
    )
    return max(value, 0.0)


def critic_filter(
    samples: list[ScoredSample], keep_fraction: float = 0.5
) -> list[ScoredSample]:
    """Keep the top ceil(keep_fraction * n) samples by critic score.

    Boundary ties resolve by sample id ascending, so the kept set is
    deterministic for any input order.
    """
    if not samples:
        raise EmptyInput("no samples to filter")
    if not (0.0 <= keep_fraction <= 1.0):
        raise ValueError(f"keep_fraction {keep_fraction} outside [0, 1]")
    keep = math.ceil(keep_fraction * len(samples))
    ranked = sorted(samples, key=lambda s: (-s.score, s.sample_id))
    return ranked[:keep]


def _bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    src = np.asarray(image, dtype=np.float64)
    in_h, in_w = src.shape
    ys = np.clip((np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5, 0.0, in_h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - wx) + src[np.ix_(y0, x1)] * wx
    bottom = src[np.ix_(y1, x0)] * (1 - wx) + src[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def toy_embed(image: np.ndarray) -> np.ndarray:
    """64-dim embedding: bilinear 8x8 downsample of [0,1] intensities, flattened.

    Integer inputs are scaled by 1/255; float inputs are taken as already
    normalized. Deterministic, dependency-free stand-in for a perceptual
    backbone so the Fréchet machinery can run end to end.
    """
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError("toy_embed expects a 2-D greyscale image")
    values = arr.astype(np.float64) / 255.0 if arr.dtype.kind in "ui" else arr.astype(np.float64)
    return _bilinear_resize(values, 8, 8).reshape(-1)


# ---------------------------------------------------------------- orchestration

@dataclass
class DetectionEvalReport:
    map50: float
    precision: float
    recall: float
    total_ground_truth: int
    total_detections: int
    per_category_ap: dict[int, float]
    curve: list[tuple[float, float, float]]  # (recall, precision, confidence)

    def as_dict(self) -> dict[str, object]:
        return {
            "map50": self.map50,
            "precision": self.precision,
            "recall": self.recall,
            "total_ground_truth": self.total_ground_truth,
            "total_detections": self.total_detections,
        }


def evaluate_detections(
    ground_truth: dict[str, list[BBox]],
    detections: list[Detection],
    iou_threshold: float = 0.5,
    confidence_cutoff: float = 0.0,
) -> DetectionEvalReport:
    """Match per image and category, then aggregate AP/precision/recall.

    `ground_truth` maps image id to its label boxes; detections for images
    missing from the map count as false positives. mAP is the mean of the
    per-category APs over categories that carry ground truth.
    """
    categories = sorted(
        {box.category_id for boxes in ground_truth.values() for box in boxes}
    )
    total_gt = sum(len(boxes) for boxes in ground_truth.values())
    if total_gt == 0:
        raise ZeroGroundTruth("no ground-truth boxes supplied")

    detections_by_image: dict[str, list[Detection]] = {}
    for det in detections:
        detections_by_image.setdefault(det.image_id, []).append(det)
    image_ids = sorted(set(ground_truth) | set(detections_by_image))
    all_flags: list[bool] = []
    all_confs: list[float] = []
    per_category: dict[int, tuple[list[bool], list[float], int]] = {
        cat: ([], [], 0) for cat in categories
    }
    for image_id in image_ids:
        gt_boxes = ground_truth.get(image_id, [])
        image_dets = detections_by_image.get(image_id, [])
        for category in sorted(
            {b.category_id for b in gt_boxes} | {d.category_id for d in image_dets}
        ):
            cat_gt = [b for b in gt_boxes if b.category_id == category]
            cat_det = [d for d in image_dets if d.category_id == category]
            flags = match_detections(cat_gt, cat_det, iou_threshold)
            confs = [d.confidence for d in cat_det]
            all_flags.extend(flags)
            all_confs.extend(confs)
            if category in per_category:
                acc_flags, acc_confs, acc_gt = per_category[category]
                acc_flags.extend(flags)
                acc_confs.extend(confs)
                per_category[category] = (acc_flags, acc_confs, acc_gt + len(cat_gt))

    per_category_ap = {
        cat: average_precision_50(flags, confs, gt_count)
        for cat, (flags, confs, gt_count) in per_category.items()
    }
    map50 = float(np.mean(list(per_category_ap.values())))
    precision, recall = precision_recall_at(
        all_flags, all_confs, total_gt, confidence_cutoff
    )
    order = np.argsort(-np.asarray(all_confs), kind="stable")
    curve = []
    tp = fp = 0
    for index in order:
        tp += int(all_flags[index])
        fp += int(not all_flags[index])
        curve.append((tp / total_gt, tp / (tp + fp), float(all_confs[index])))
    return DetectionEvalReport(
        map50=map50,
        precision=precision,
        recall=recall,
        total_ground_truth=total_gt,
        total_detections=len(detections),
        per_category_ap=per_category_ap,
        curve=curve,
    )
