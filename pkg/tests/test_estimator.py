import numpy as np
import pytest
from sklearn.base import clone

from promptseg.core import PipelineConfig, PipelineToggles
from promptseg.estimator import AnomalySegmenter
from promptseg.fixtures import generate_case, standard_spec
from promptseg.pipeline import run_pipeline


@pytest.fixture(scope="module")
def case():
    return generate_case(standard_spec(0)).bundle


class TestSklearnContract:
    def test_get_set_params_round_trip(self):
        seg = AnomalySegmenter(top_k=3, theta_iou=0.4)
        params = seg.get_params()
        assert params["top_k"] == 3
        other = AnomalySegmenter().set_params(**params)
        assert other.get_params() == params

    def test_clone(self):
        seg = AnomalySegmenter(n_neighbors=17, use_saliency=False)
        twin = clone(seg)
        assert twin.get_params() == seg.get_params()

    def test_fit_returns_self_and_validates(self):
        seg = AnomalySegmenter()
        assert seg.fit() is seg
        bad = AnomalySegmenter(theta_area=0.0)
        with pytest.raises(ValueError):
            bad.fit()


class TestPrediction:
    def test_single_case_matches_run_pipeline(self, case):
        seg = AnomalySegmenter().fit()
        amap = seg.predict(case)
        expected, _ = run_pipeline(case, PipelineConfig())
        assert np.array_equal(amap.values, expected.values)

    def test_list_prediction(self, case):
        seg = AnomalySegmenter()
        maps = seg.predict([case, case])
        assert len(maps) == 2
        assert np.array_equal(maps[0].values, maps[1].values)

    def test_transform_is_predict(self, case):
        seg = AnomalySegmenter()
        assert np.array_equal(seg.transform(case).values, seg.predict(case).values)

    def test_predict_trace(self, case):
        seg = AnomalySegmenter()
        amap, trace = seg.predict_trace(case)
        assert trace.stage_counts["input"] == len(case.candidates)
        assert amap.values.shape == (case.image.height, case.image.width)

    def test_toggles_flow_through(self, case):
        seg = AnomalySegmenter(use_saliency=False)
        cfg = PipelineConfig(toggles=PipelineToggles(True, False, True))
        expected, _ = run_pipeline(case, cfg)
        assert np.array_equal(seg.predict(case).values, expected.values)

    def test_score_uses_ground_truth(self, case):
        seg = AnomalySegmenter()
        assert seg.score([case]) > 0.9

    def test_score_without_truth_raises(self, case):
        from promptseg.core import CaseBundle

        naked = CaseBundle(
            image=case.image,
            candidates=case.candidates,
            features=case.features,
            object_region=case.object_region,
            ground_truth=None,
        )
        with pytest.raises(ValueError, match="ground-truth"):
            AnomalySegmenter().score([naked])


class TestConfigBridge:
    def test_from_config_round_trip(self):
        cfg = PipelineConfig(
            theta_iou=0.25,
            top_k=9,
            toggles=PipelineToggles(False, True, False),
        )
        seg = AnomalySegmenter.from_config(cfg)
        assert seg._config() == cfg
