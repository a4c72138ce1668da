import json

import numpy as np
import pytest

from conftest import render_inspection_image
from promptseg_adapters.backends import (
    BoxFillRefiner,
    ContrastBlobDetector,
    GridStatsExtractor,
)
from promptseg_adapters.config import AdapterConfig, PromptSet
from promptseg_adapters.extract import build_case, extract_regions, refine_masks
from promptseg_adapters.formats import write_image_png


@pytest.fixture
def backends():
    return ContrastBlobDetector(), BoxFillRefiner(), GridStatsExtractor(grid=12)


class TestExtractRegions:
    def test_one_pass_per_prompt_counts(self, backends):
        detector, _, _ = backends
        image, _ = render_inspection_image(96, (40, 30, 10, 12))
        prompts = ["anomaly", "black hole", "white bubble"]
        regions, per_prompt = extract_regions(image, prompts, detector, 0.05)
        assert set(per_prompt) == set(prompts)
        assert sum(per_prompt.values()) == len(regions)
        assert per_prompt["black hole"] == 1
        assert per_prompt["white bubble"] == 0

    def test_empty_prompt_list_is_an_error(self, backends):
        detector, _, _ = backends
        image, _ = render_inspection_image(96, None)
        with pytest.raises(ValueError, match="empty"):
            extract_regions(image, [], detector, 0.05)

    def test_region_fragments_match_schema(self, backends):
        detector, _, _ = backends
        image, _ = render_inspection_image(96, (40, 30, 10, 12))
        regions, _ = extract_regions(image, ["defect"], detector, 0.05)
        for region in regions:
            assert set(region) == {"box", "score", "phrase", "mask"}
            assert 0.0 <= region["score"] <= 1.0
            assert len(region["box"]) == 4


class TestRefineMasks:
    def test_image_sized_masks(self, backends):
        _, refiner, _ = backends
        image, _ = render_inspection_image(64, None)
        masks, failures = refine_masks(image, [[4, 4, 20, 20]], refiner)
        assert failures == []
        assert masks[0].shape == (64, 64)

    def test_degenerate_box_recorded(self, backends):
        _, refiner, _ = backends
        image, _ = render_inspection_image(64, None)
        masks, failures = refine_masks(image, [[5, 5, 5, 5]], refiner)
        assert masks == [None]
        assert len(failures) == 1

    def test_masks_stay_inside_dilated_prompt_box(self, backends):
        # Soft sanity bound: nothing outside the box grown by 10%.
        _, refiner, _ = backends
        image, _ = render_inspection_image(64, (20, 20, 10, 10))
        boxes = [[10.0, 10.0, 30.0, 30.0], [40.0, 8.0, 60.0, 28.0]]
        masks, _ = refine_masks(image, boxes, refiner)
        for (x0, y0, x1, y1), mask in zip(boxes, masks):
            grow_x, grow_y = 0.1 * (x1 - x0), 0.1 * (y1 - y0)
            allowed = np.zeros_like(mask)
            r0 = max(int(y0 - grow_y), 0)
            r1 = min(int(np.ceil(y1 + grow_y)), 64)
            c0 = max(int(x0 - grow_x), 0)
            c1 = min(int(np.ceil(x1 + grow_x)), 64)
            allowed[r0:r1, c0:c1] = True
            assert not np.logical_and(mask, ~allowed).any()


class TestBuildCase:
    def test_case_directory_layout(self, backends, tmp_path):
        detector, refiner, extractor = backends
        image, mask = render_inspection_image(96, (40, 30, 10, 12))
        img_path = tmp_path / "img.png"
        write_image_png(image, img_path)
        gt_path = tmp_path / "gt.png"
        from promptseg_adapters.formats import write_mask_png

        write_mask_png(mask, gt_path)

        cfg = AdapterConfig(input_size=96, prompts=PromptSet())
        result = build_case(
            img_path, gt_path, "widget", tmp_path / "case", cfg,
            detector, refiner, extractor,
        )
        assert result.manifest is not None
        data = json.loads(result.manifest.read_text())
        base = result.manifest.parent
        assert (base / data["image"]).exists()
        assert (base / data["features"]).exists()
        assert (base / data["ground_truth"]).exists()
        assert data["category"] == "widget"
        assert data["backbone_layer"] == "gridstats12"
        assert data["object_region"] is not None
        assert result.region_count == len(data["regions"]) > 0
        for region in data["regions"]:
            if region["mask"] is not None:
                assert (base / region["mask"]).exists()

    def test_good_image_gets_zero_ground_truth(self, backends, tmp_path):
        detector, refiner, extractor = backends
        image, _ = render_inspection_image(96, None)
        img_path = tmp_path / "img.png"
        write_image_png(image, img_path)
        cfg = AdapterConfig(input_size=96)
        result = build_case(
            img_path, None, "widget", tmp_path / "case", cfg,
            detector, refiner, extractor,
        )
        from PIL import Image

        gt = np.asarray(Image.open(result.manifest.parent / "ground_truth.png"))
        assert gt.shape == (96, 96)
        assert not gt.any()

    def test_resizes_to_input_size(self, backends, tmp_path):
        detector, refiner, extractor = backends
        image, mask = render_inspection_image(96, (40, 30, 12, 12))
        img_path = tmp_path / "img.png"
        write_image_png(image, img_path)
        from promptseg_adapters.formats import write_mask_png

        gt_path = tmp_path / "gt.png"
        write_mask_png(mask, gt_path)
        cfg = AdapterConfig(input_size=48)
        result = build_case(
            img_path, gt_path, "widget", tmp_path / "case", cfg,
            detector, refiner, extractor,
        )
        from PIL import Image

        base = result.manifest.parent
        assert Image.open(base / "image.png").size == (48, 48)
        assert Image.open(base / "ground_truth.png").size == (48, 48)
