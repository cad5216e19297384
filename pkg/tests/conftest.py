"""Shared fixtures: tiny synthetic slides with known labels."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from holoforge import io as hio
from holoforge.geometry import BBox


def make_slide(
    rng: np.random.Generator,
    width: int,
    height: int,
    n_grains: int,
    grain_side: int = 40,
) -> tuple[np.ndarray, list[BBox]]:
    """Grey slide with bright square blobs and matching labels."""
    image = rng.integers(20, 60, size=(height, width), dtype=np.uint8)
    labels = []
    for _ in range(n_grains):
        gw = int(rng.integers(grain_side // 2, grain_side))
        gh = int(rng.integers(grain_side // 2, grain_side))
        x0 = int(rng.integers(0, width - gw))
        y0 = int(rng.integers(0, height - gh))
        image[y0 : y0 + gh, x0 : x0 + gw] = rng.integers(150, 250)
        labels.append(
            BBox.from_extent(
                0, x0 / width, y0 / height, (x0 + gw) / width, (y0 + gh) / height
            )
        )
    return image, labels


@pytest.fixture
def slide_corpus(tmp_path: Path) -> dict[str, Path]:
    """Two labeled slides on disk, sized so tiling produces several patches."""
    rng = np.random.default_rng(1234)
    images = tmp_path / "slides" / "images"
    labels = tmp_path / "slides" / "labels"
    images.mkdir(parents=True)
    labels.mkdir(parents=True)
    for index, (width, height) in enumerate([(400, 300), (350, 260)]):
        image, boxes = make_slide(rng, width, height, n_grains=6, grain_side=30)
        stem = f"slide{index}"
        hio.write_image(images / f"{stem}.png", image)
        hio.write_label_file(labels / f"{stem}.txt", boxes)
    return {"images": images, "labels": labels, "root": tmp_path}
