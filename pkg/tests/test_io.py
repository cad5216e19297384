"""File formats: labels, transforms, detections, scores, EMB1 blobs, images."""

import numpy as np
import pytest

from holoforge import io as hio
from holoforge.errors import NonFiniteInput
from holoforge.geometry import AffineTransform, BBox


class TestLabelFiles:
    def test_roundtrip(self, tmp_path):
        boxes = [BBox(0, 0.5, 0.5, 0.25, 0.125), BBox(1, 0.125, 0.75, 0.0625, 0.5)]
        path = tmp_path / "labels.txt"
        hio.write_label_file(path, boxes)
        loaded = hio.read_label_file(path)
        assert loaded == boxes  # .6f precision is exact for these dyadics

    def test_layout(self, tmp_path):
        path = tmp_path / "labels.txt"
        hio.write_label_file(path, [BBox(0, 0.5, 0.5, 0.25, 0.125)])
        assert path.read_text() == "0 0.500000 0.500000 0.250000 0.125000\n"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "labels.txt"
        hio.write_label_file(path, [])
        assert path.read_text() == ""
        assert hio.read_label_file(path) == []

    def test_malformed_rejected(self, tmp_path):
        path = tmp_path / "labels.txt"
        path.write_text("0 0.5 0.5 0.25\n")
        with pytest.raises(ValueError):
            hio.read_label_file(path)


class TestTransformFiles:
    def test_roundtrip_exact(self, tmp_path):
        transform = AffineTransform(
            a=1.2345678901234567, b=0.1, tx=33.333, c=-0.05, d=0.9, ty=-7.25
        )
        path = tmp_path / "T.txt"
        hio.write_transform_file(path, transform)
        assert hio.read_transform_file(path) == transform  # %.17g is lossless

    def test_identity_layout(self, tmp_path):
        path = tmp_path / "T.txt"
        hio.write_transform_file(path, AffineTransform.identity())
        assert path.read_text().split() == ["1", "0", "0", "0", "1", "0"]


class TestPairsFiles:
    def test_parse(self, tmp_path):
        path = tmp_path / "pairs.txt"
        path.write_text("# comment\n0 0 10 20\n1 0 11 20\n\n0 1 10 21\n")
        pairs = hio.read_pairs_file(path)
        assert pairs == [((0, 0), (10, 20)), ((1, 0), (11, 20)), ((0, 1), (10, 21))]


class TestDetectionFiles:
    def test_roundtrip(self, tmp_path):
        rows = [
            ("img_a", 0, BBox(0, 0.5, 0.5, 0.25, 0.25), 0.875),
            ("img_b", 0, BBox(0, 0.25, 0.75, 0.125, 0.0625), 0.5),
        ]
        path = tmp_path / "detections.txt"
        hio.write_detection_file(path, rows)
        assert hio.read_detection_file(path) == rows

    def test_confidence_last(self, tmp_path):
        path = tmp_path / "detections.txt"
        hio.write_detection_file(path, [("im", 0, BBox(0, 0.5, 0.5, 0.25, 0.25), 0.75)])
        fields = path.read_text().split()
        assert fields[0] == "im"
        assert fields[-1] == "0.750000"


class TestScoresFiles:
    def test_roundtrip(self, tmp_path):
        rows = [("s1", 0.25), ("s2", -3.5)]
        path = tmp_path / "scores.txt"
        hio.write_scores_file(path, rows)
        assert hio.read_scores_file(path) == rows


class TestEmbeddingBlob:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        matrix = rng.normal(size=(5, 7)).astype(np.float32)
        path = tmp_path / "emb.bin"
        hio.write_embedding_blob(path, matrix)
        loaded = hio.read_embedding_blob(path)
        assert loaded.shape == (5, 7)
        assert np.allclose(loaded, matrix)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "emb.bin"
        hio.write_embedding_blob(path, np.zeros((3, 2), dtype=np.float32))
        data = path.read_bytes()
        assert data[:4] == b"EMB1"
        assert int.from_bytes(data[4:8], "little") == 3
        assert int.from_bytes(data[8:12], "little") == 2
        assert len(data) == 12 + 4 * 6

    def test_row_major_order(self, tmp_path):
        matrix = np.arange(6, dtype=np.float32).reshape(2, 3)
        path = tmp_path / "emb.bin"
        hio.write_embedding_blob(path, matrix)
        payload = np.frombuffer(path.read_bytes()[12:], dtype="<f4")
        assert payload.tolist() == [0, 1, 2, 3, 4, 5]

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError):
            hio.read_embedding_blob(path)

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "emb.bin"
        hio.write_embedding_blob(path, np.zeros((3, 2), dtype=np.float32))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(ValueError):
            hio.read_embedding_blob(path)

    def test_non_finite_rejected(self, tmp_path):
        with pytest.raises(NonFiniteInput):
            hio.write_embedding_blob(tmp_path / "x.bin", np.array([[np.inf, 0.0]]))


class TestImages:
    def test_grey_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        image = rng.integers(0, 256, size=(20, 30), dtype=np.uint8)
        path = tmp_path / "img.png"
        hio.write_image(path, image)
        assert (hio.read_image_grey(path) == image).all()
        assert hio.image_geometry(path) == (30, 20)

    def test_rgb_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        image = rng.integers(0, 256, size=(16, 12, 3), dtype=np.uint8)
        path = tmp_path / "img.png"
        hio.write_image(path, image)
        assert (hio.read_image(path) == image).all()


class TestReports:
    def test_format(self):
        text = hio.format_keyvalue_report({"map50": 0.5, "n": 3})
        assert text == "map50=0.5\nn=3"
