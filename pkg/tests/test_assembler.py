"""Assembler: splits, mixing ratios, emission, manifest I/O, statistics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holoforge import io as hio
from holoforge.assembler import (
    DatasetManifest,
    ManifestItem,
    dataset_stats,
    emit_dataset,
    make_splits,
    mix_training,
    read_manifest,
    split_sizes,
    write_manifest,
)
from holoforge.errors import (
    CollisionAtDestination,
    HoloforgeError,
    InsufficientSyntheticPool,
    MissingSource,
    TooFewItems,
)
from holoforge.geometry import BBox


def fake_items(count, prefix="real"):
    return [(f"{prefix}_{i:05d}.png", f"{prefix}_{i:05d}.txt") for i in range(count)]


class TestSplitSizes:
    def test_paper_scale(self):
        assert split_sizes(4363) == (3054, 654, 655)

    def test_ten_items(self):
        assert split_sizes(10) == (7, 1, 2)

    def test_minimal(self):
        assert split_sizes(3) == (1, 1, 1)

    def test_too_few(self):
        with pytest.raises(TooFewItems):
            split_sizes(2)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(3, 100_000))
    def test_partition_properties(self, n):
        train, val, test = split_sizes(n)
        assert train + val + test == n
        assert train >= 1 and val >= 1 and test >= 1


class TestMakeSplits:
    def test_paper_counts(self):
        manifest = make_splits(fake_items(4363), seed=7)
        counts = manifest.counts()
        assert (counts["train"], counts["val"], counts["test"]) == (3054, 654, 655)

    def test_each_item_in_exactly_one_split(self):
        manifest = make_splits(fake_items(50), seed=3)
        paths = [item.image_path for item in manifest.items]
        assert len(paths) == len(set(paths)) == 50

    def test_deterministic(self):
        a = make_splits(fake_items(40), seed=5)
        b = make_splits(fake_items(40), seed=5)
        assert a.items == b.items
        c = make_splits(fake_items(40), seed=6)
        assert a.items != c.items

    def test_input_order_does_not_matter(self):
        items = fake_items(30)
        rng = np.random.default_rng(0)
        shuffled = [items[i] for i in rng.permutation(30)]
        a = make_splits(items, seed=11)
        b = make_splits(shuffled, seed=11)
        assert sorted(a.items, key=lambda i: i.image_path) == sorted(
            b.items, key=lambda i: i.image_path
        )
        # membership identical, not just counts
        assert {(i.image_path, i.split) for i in a.items} == {
            (i.image_path, i.split) for i in b.items
        }

    def test_duplicates_rejected(self):
        items = fake_items(5) + [fake_items(5)[0]]
        with pytest.raises(HoloforgeError):
            make_splits(items, seed=0)


class TestMixTraining:
    @pytest.fixture
    def base(self):
        return make_splits(fake_items(4363), seed=42)

    @pytest.mark.parametrize(
        "ratio,expected_total",
        [(0.0, 3054), (0.5, 4581), (1.0, 6108), (1.5, 7635), (2.0, 9162), (2.5, 10689)],
    )
    def test_mixing_table(self, base, ratio, expected_total):
        pool = fake_items(7700, prefix="comp")
        mixed = mix_training(base, pool, ratio)
        assert len(mixed.split_items("train")) == expected_total
        assert mixed.ratio == f"1:{ratio:g}"

    def test_val_test_untouched(self, base):
        pool = fake_items(7000, prefix="comp")
        before = (
            [i.image_path for i in base.split_items("val")],
            [i.image_path for i in base.split_items("test")],
        )
        mixed = mix_training(base, pool, 2.0)
        after = (
            [i.image_path for i in mixed.split_items("val")],
            [i.image_path for i in mixed.split_items("test")],
        )
        assert before == after
        assert all(i.provenance == "real" for i in mixed.split_items("val"))
        assert all(i.provenance == "real" for i in mixed.split_items("test"))

    def test_insufficient_pool(self, base):
        with pytest.raises(InsufficientSyntheticPool):
            mix_training(base, fake_items(10, prefix="comp"), 1.5)

    def test_composites_only_in_train(self, base):
        mixed = mix_training(base, fake_items(5000, prefix="comp"), 1.0)
        mixed.validate()
        for item in mixed.items:
            if item.provenance == "composite":
                assert item.split == "train"

    def test_zero_ratio_unchanged(self, base):
        mixed = mix_training(base, [], 0.0)
        assert [i.image_path for i in mixed.items] == [
            i.image_path for i in base.items
        ]


class TestManifestIO:
    def test_roundtrip(self, tmp_path):
        manifest = make_splits(fake_items(12), seed=1)
        manifest = mix_training(manifest, fake_items(20, prefix="c"), 1.0)
        path = tmp_path / "manifest.tsv"
        write_manifest(path, manifest)
        loaded = read_manifest(path)
        assert loaded.items == manifest.items
        assert loaded.ratio == manifest.ratio
        assert loaded.seed == manifest.seed

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("train\treal\ta.png\ta.txt\n")
        with pytest.raises(HoloforgeError):
            read_manifest(path)


def materialize_items(root, items, size=(32, 24), boxes=None):
    """Write real png/txt files for manifest items."""
    rng = np.random.default_rng(0)
    for image_path, label_path in items:
        image = rng.integers(0, 255, size=(size[1], size[0]), dtype=np.uint8)
        hio.write_image(root / image_path, image)
        hio.write_label_file(root / label_path, boxes or [])


class TestEmitDataset:
    def make_manifest(self, tmp_path, count=6):
        items = fake_items(count)
        materialize_items(tmp_path, items, boxes=[BBox(0, 0.5, 0.5, 0.25, 0.25)])
        rooted = [(str(tmp_path / img), str(tmp_path / lbl)) for img, lbl in items]
        return make_splits(rooted, seed=2)

    def test_tree_layout(self, tmp_path):
        manifest = self.make_manifest(tmp_path)
        out = tmp_path / "dataset"
        report = emit_dataset(manifest, out)
        assert report.written == 12  # 6 images + 6 labels
        for split in ("train", "val", "test"):
            assert (out / split / "images").is_dir()
            assert (out / split / "labels").is_dir()
        descriptor = (out / "descriptor.txt").read_text()
        assert "train=train/images" in descriptor
        assert "categories=pollen" in descriptor

    def test_idempotent_reemission(self, tmp_path):
        manifest = self.make_manifest(tmp_path)
        out = tmp_path / "dataset"
        emit_dataset(manifest, out)
        second = emit_dataset(manifest, out)
        assert second.written == 0
        assert second.unchanged == 12

    def test_collision_detected(self, tmp_path):
        manifest = self.make_manifest(tmp_path)
        out = tmp_path / "dataset"
        emit_dataset(manifest, out)
        victim = next((out / "train" / "images").glob("*.png"))
        victim.write_bytes(b"corrupted")
        with pytest.raises(CollisionAtDestination):
            emit_dataset(manifest, out)

    def test_missing_source(self, tmp_path):
        manifest = DatasetManifest(
            items=[
                ManifestItem(str(tmp_path / "ghost.png"), str(tmp_path / "ghost.txt"), "real", "train")
            ],
            ratio="1:0",
            seed=0,
            version="",
        )
        with pytest.raises(MissingSource):
            emit_dataset(manifest, tmp_path / "dataset")

    def test_empty_manifest_descriptor_only(self, tmp_path):
        manifest = DatasetManifest(items=[], ratio="1:0", seed=0, version="")
        report = emit_dataset(manifest, tmp_path / "dataset")
        assert report.written == 0
        assert (tmp_path / "dataset" / "descriptor.txt").exists()


class TestDatasetStats:
    def test_empty_manifest(self):
        manifest = DatasetManifest(items=[], ratio="1:0", seed=0, version="")
        report = dataset_stats(manifest)
        assert report.label_count == 0
        assert report.box_width_mean_px == 0.0
        assert all(v == 0 for v in report.items_per_split.values())

    def test_pixel_statistics(self, tmp_path):
        # 40x20 image; boxes of w=0.5 -> 20 px and 0.25 -> 10 px.
        boxes = [BBox(0, 0.5, 0.5, 0.5, 0.4), BBox(0, 0.5, 0.5, 0.25, 0.2)]
        items = fake_items(3)
        materialize_items(tmp_path, items, size=(40, 20), boxes=boxes)
        rooted = [(str(tmp_path / img), str(tmp_path / lbl)) for img, lbl in items]
        manifest = make_splits(rooted, seed=3)
        report = dataset_stats(manifest)
        assert report.label_count == 6
        assert report.box_width_mean_px == pytest.approx(15.0)
        assert report.box_width_std_px == pytest.approx(5.0)
        assert report.box_height_mean_px == pytest.approx(6.0)
        assert report.missing_files == 0

    def test_missing_files_counted(self, tmp_path):
        manifest = DatasetManifest(
            items=[ManifestItem("nope.png", "nope.txt", "real", "train")],
            ratio="1:0",
            seed=0,
            version="",
        )
        report = dataset_stats(manifest)
        assert report.missing_files == 1
