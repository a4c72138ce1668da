import numpy as np
import pytest

from conftest import render_inspection_image
from promptseg_adapters.backends import (
    BoxFillRefiner,
    ContrastBlobDetector,
    GridStatsExtractor,
    GroundingDetector,
    PromptedSegmenter,
    WideResNetExtractor,
)


def box_iou(a, b):
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    inter = max(0, ix1 - ix0) * max(0, iy1 - iy0)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


class TestContrastBlobDetector:
    def test_finds_planted_blob(self):
        image, _ = render_inspection_image(96, (40, 30, 10, 12))
        hits = ContrastBlobDetector().detect(image, "black hole")
        assert len(hits) == 1
        box, score = hits[0]
        assert box_iou(box, (30, 40, 42, 50)) > 0.9
        assert 0.05 <= score <= 0.99

    def test_phrase_polarity(self):
        image, _ = render_inspection_image(96, (40, 30, 10, 12))
        assert ContrastBlobDetector().detect(image, "white bubble") == []
        generic = ContrastBlobDetector().detect(image, "anomaly")
        assert len(generic) == 1

    def test_clean_image_has_no_detections(self):
        image, _ = render_inspection_image(96, None)
        assert ContrastBlobDetector().detect(image, "anomaly") == []

    def test_object_detection_finds_the_square(self):
        image, _ = render_inspection_image(96, (40, 30, 10, 12))
        hit = ContrastBlobDetector().detect_object(image)
        assert hit is not None
        box, score = hit
        assert box_iou(box, (16, 16, 80, 80)) > 0.9


class TestBoxFillRefiner:
    def test_rectangle_mask(self):
        image, _ = render_inspection_image(32, None)
        masks = BoxFillRefiner().refine(image, [(4.0, 6.0, 10.0, 12.0)])
        assert masks[0] is not None
        assert masks[0].shape == (32, 32)
        assert masks[0].sum() == 36

    def test_degenerate_box_fails(self):
        image, _ = render_inspection_image(32, None)
        masks = BoxFillRefiner().refine(image, [(5.0, 5.0, 5.0, 5.0)])
        assert masks == [None]


class TestGridStatsExtractor:
    def test_shape_and_determinism(self):
        image, _ = render_inspection_image(96, (40, 30, 10, 12))
        ex = GridStatsExtractor(grid=12)
        a = ex.extract(image)
        b = ex.extract(image)
        assert a.shape == (12, 12, 10)
        assert a.dtype == np.float32
        assert np.array_equal(a, b)

    def test_constant_image_is_nearly_constant(self):
        image = np.full((64, 64, 3), 90, np.uint8)
        fmap = GridStatsExtractor(grid=8).extract(image)
        flat = fmap.reshape(-1, fmap.shape[-1])
        assert float(np.ptp(flat, axis=0).max()) < 1e-6

    def test_blob_cells_differ_from_background(self):
        image, mask = render_inspection_image(96, (40, 32, 16, 16))
        fmap = GridStatsExtractor(grid=12).extract(image)  # 8 px cells
        blob_cell = fmap[5, 4]
        bg_cell = fmap[2, 2]
        assert np.linalg.norm(blob_cell - bg_cell) > 1.0


class TestWideResNetExtractor:
    def test_stride8_grid_and_determinism(self):
        image, _ = render_inspection_image(64, (24, 24, 8, 8))
        ex = WideResNetExtractor(layer="layer2", seed=3)
        fmap = ex.extract(image)
        assert fmap.shape == (8, 8, 512)
        assert np.all(np.isfinite(fmap))
        ex2 = WideResNetExtractor(layer="layer2", seed=3)
        assert np.array_equal(fmap, ex2.extract(image))

    def test_unknown_layer_rejected(self):
        with pytest.raises(ValueError):
            WideResNetExtractor(layer="layer9")


class TestRealBackendsGuarded:
    def test_grounding_detector_needs_package(self, tmp_path):
        with pytest.raises((RuntimeError, Exception)):
            GroundingDetector(str(tmp_path / "x.pth"), str(tmp_path / "x.py"))

    def test_segmenter_needs_package(self, tmp_path):
        with pytest.raises((RuntimeError, Exception)):
            PromptedSegmenter(str(tmp_path / "x.pth"))
