"""Readers and writers for every on-disk format the pipeline stages share.

Formats:
  label file      one box per line: `category_id cx cy w h`, normalized
  transform file  one line, six coefficients: `a b tx c d ty`
  pairs file      one correspondence per line: `src_x src_y dst_x dst_y`
  detection file  one line per detection: `image_id category_id cx cy w h confidence`
  scores file     one line per sample: `sample_id score`
  EMB1 blob       magic `EMB1`, u32 n, u32 d (little-endian), n*d float32 row-major
  batch ledger    tab-separated: composite id, background id, seed, grain count, hash
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import NonFiniteInput
from .geometry import AffineTransform, BBox


# ---------------------------------------------------------------- labels

def read_label_file(path: str | Path) -> list[BBox]:
    boxes = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{path}: expected 5 fields per label line, got {len(parts)}")
        boxes.append(
            BBox(
                category_id=int(float(parts[0])),
                cx=float(parts[1]),
                cy=float(parts[2]),
                w=float(parts[3]),
                h=float(parts[4]),
            )
        )
    return boxes


def write_label_file(path: str | Path, boxes: list[BBox]) -> None:
    lines = [
        f"{b.category_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}" for b in boxes
    ]
    Path(path).write_text("".join(line + "\n" for line in lines))


# ---------------------------------------------------------------- transforms

def read_transform_file(path: str | Path) -> AffineTransform:
    parts = Path(path).read_text().split()
    if len(parts) != 6:
        raise ValueError(f"{path}: expected 6 coefficients, got {len(parts)}")
    a, b, tx, c, d, ty = (float(p) for p in parts)
    return AffineTransform(a=a, b=b, tx=tx, c=c, d=d, ty=ty)


def write_transform_file(path: str | Path, transform: AffineTransform) -> None:
    Path(path).write_text(
        " ".join(f"{v:.17g}" for v in transform.coefficients()) + "\n"
    )


def read_pairs_file(
    path: str | Path,
) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    pairs = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}: expected 4 fields per pair line, got {len(parts)}")
        sx, sy, dx, dy = (float(p) for p in parts)
        pairs.append(((sx, sy), (dx, dy)))
    return pairs


# ---------------------------------------------------------------- detections

def read_detection_file(path: str | Path) -> list[tuple[str, int, BBox, float]]:
    """Returns (image_id, category_id, box, confidence) tuples."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 7:
            raise ValueError(f"{path}: expected 7 fields per detection line, got {len(parts)}")
        box = BBox(
            category_id=int(float(parts[1])),
            cx=float(parts[2]),
            cy=float(parts[3]),
            w=float(parts[4]),
            h=float(parts[5]),
        )
        rows.append((parts[0], box.category_id, box, float(parts[6])))
    return rows


def write_detection_file(
    path: str | Path, rows: list[tuple[str, int, BBox, float]]
) -> None:
    lines = [
        f"{image_id} {category_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f} {conf:.6f}"
        for image_id, category_id, b, conf in rows
    ]
    Path(path).write_text("".join(line + "\n" for line in lines))


# ---------------------------------------------------------------- scores

def read_scores_file(path: str | Path) -> list[tuple[str, float]]:
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: expected 2 fields per score line, got {len(parts)}")
        rows.append((parts[0], float(parts[1])))
    return rows


def write_scores_file(path: str | Path, rows: list[tuple[str, float]]) -> None:
    Path(path).write_text(
        "".join(f"{sample_id} {score:.17g}\n" for sample_id, score in rows)
    )


# ---------------------------------------------------------------- EMB1 blobs

_EMB1_MAGIC = b"EMB1"


def write_embedding_blob(path: str | Path, matrix: np.ndarray) -> None:
    """Write an n x d float matrix in the EMB1 layout."""
    mat = np.ascontiguousarray(np.asarray(matrix, dtype=np.float32))
    if mat.ndim != 2:
        raise ValueError(f"embedding matrix must be 2-D, got shape {mat.shape}")
    if not np.isfinite(mat).all():
        raise NonFiniteInput("embedding matrix contains non-finite values")
    n, d = mat.shape
    with open(path, "wb") as fh:
        fh.write(_EMB1_MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(mat.tobytes(order="C"))


def read_embedding_blob(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != _EMB1_MAGIC:
        raise ValueError(f"{path}: not an EMB1 blob")
    n, d = struct.unpack("<II", data[4:12])
    expected = 12 + 4 * n * d
    if len(data) != expected:
        raise ValueError(f"{path}: EMB1 payload is {len(data)} bytes, expected {expected}")
    mat = np.frombuffer(data, dtype="<f4", offset=12).reshape(n, d)
    if not np.isfinite(mat).all():
        raise NonFiniteInput(f"{path}: embedding matrix contains non-finite values")
    return mat.astype(np.float64)


# ---------------------------------------------------------------- images

def read_image(path: str | Path) -> np.ndarray:
    """Read a PNG as uint8: 2-D for greyscale, (h, w, 3) for RGB."""
    with Image.open(path) as img:
        if img.mode in ("L", "I;16", "I"):
            return np.asarray(img.convert("L"), dtype=np.uint8)
        if img.mode == "RGB":
            return np.asarray(img, dtype=np.uint8)
        if img.mode in ("RGBA", "P", "LA"):
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
        return np.asarray(img.convert("L"), dtype=np.uint8)


def read_image_grey(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8)


def write_image(path: str | Path, pixels: np.ndarray) -> None:
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {arr.dtype}")
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(path, format="PNG")


def image_geometry(path: str | Path) -> tuple[int, int]:
    """(width, height) from the image header without a full decode."""
    with Image.open(path) as img:
        return img.size


# ---------------------------------------------------------------- reports

def write_keyvalue_report(path: str | Path, values: dict[str, object]) -> None:
    Path(path).write_text(
        "".join(f"{key}={_fmt_value(val)}\n" for key, val in values.items())
    )


def format_keyvalue_report(values: dict[str, object]) -> str:
    return "\n".join(f"{key}={_fmt_value(val)}" for key, val in values.items())


def _fmt_value(val: object) -> str:
    if isinstance(val, float):
        return f"{val:.10g}"
    return str(val)
