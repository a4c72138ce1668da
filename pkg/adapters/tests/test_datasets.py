import pytest

from conftest import make_mvtec_tree
from promptseg_adapters.datasets import LAYOUT_MVTEC, LAYOUT_VISA, discover_samples


class TestMvtecLayout:
    def test_counts_and_categories(self, mvtec_root):
        samples, skipped = discover_samples(mvtec_root, LAYOUT_MVTEC)
        # 2 categories x (3 anomalous + 2 good)
        assert len(samples) == 10
        assert skipped == []
        assert {s.category for s in samples} == {"widget", "gasket"}

    def test_good_images_have_no_gt(self, mvtec_root):
        samples, _ = discover_samples(mvtec_root, LAYOUT_MVTEC)
        good = [s for s in samples if s.defect_type == "good"]
        assert len(good) == 4
        assert all(s.gt_path is None and not s.is_anomalous for s in good)

    def test_anomalous_images_have_gt(self, mvtec_root):
        samples, _ = discover_samples(mvtec_root, LAYOUT_MVTEC)
        bad = [s for s in samples if s.is_anomalous]
        assert len(bad) == 6
        assert all(s.gt_path is not None and s.gt_path.exists() for s in bad)

    def test_missing_gt_skips_with_warning(self, tmp_path, caplog):
        root = make_mvtec_tree(
            tmp_path / "d", ["widget"], drop_gt_for={("widget", 1)}
        )
        with caplog.at_level("WARNING"):
            samples, skipped = discover_samples(root, LAYOUT_MVTEC)
        assert len(skipped) == 1
        assert len([s for s in samples if s.is_anomalous]) == 2
        assert "skipping" in caplog.text

    def test_case_ids_are_unique(self, mvtec_root):
        samples, _ = discover_samples(mvtec_root, LAYOUT_MVTEC)
        ids = [s.case_id for s in samples]
        assert len(set(ids)) == len(ids)


class TestVisaLayout:
    def test_counts(self, visa_root):
        samples, skipped = discover_samples(visa_root, LAYOUT_VISA)
        assert len(samples) == 3  # 2 anomalous + 1 normal
        assert skipped == []
        normal = [s for s in samples if s.defect_type == "normal"]
        assert len(normal) == 1 and normal[0].gt_path is None


class TestErrors:
    def test_missing_root(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            discover_samples(tmp_path / "nope", LAYOUT_MVTEC)

    def test_unknown_layout(self, mvtec_root):
        with pytest.raises(ValueError):
            discover_samples(mvtec_root, "zigzag")

    def test_empty_root_is_empty(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        samples, skipped = discover_samples(empty, LAYOUT_MVTEC)
        assert samples == [] and skipped == []
