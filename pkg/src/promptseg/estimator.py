"""Scikit-learn style front end for the pipeline.

The segmenter is training-free, so ``fit`` only validates parameters; the
value of the estimator wrapper is parameter plumbing (``get_params`` /
``set_params`` / ``clone``) and batch prediction, which lets the pipeline
sit inside ordinary sklearn tooling such as grid search over thresholds.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence, Union

from sklearn.base import BaseEstimator

from .core import (
    DEFAULT_DEDUPE_IOU,
    DEFAULT_INPUT_SIZE,
    DEFAULT_N_NEIGHBORS,
    DEFAULT_THETA_AREA,
    DEFAULT_THETA_IOU,
    DEFAULT_TOP_K,
    OVERLAP_IOR,
    AnomalyMap,
    CaseBundle,
    PipelineConfig,
    PipelineToggles,
)
from .metrics import max_f1_pixel
from .pipeline import PipelineTrace, run_pipeline

CaseOrCases = Union[CaseBundle, Iterable[CaseBundle]]


class AnomalySegmenter(BaseEstimator):
    """Predict per-pixel anomaly maps from pre-extracted case bundles.

    Parameters mirror the pipeline configuration one to one; toggles are
    flattened (``use_*``) so they can be searched independently.

    Examples
    --------
    >>> from promptseg.fixtures import generate_case, standard_spec
    >>> case = generate_case(standard_spec(0)).bundle
    >>> seg = AnomalySegmenter(top_k=5).fit()
    >>> amap = seg.predict(case)
    >>> amap.values.shape == (case.image.height, case.image.width)
    True
    """

    def __init__(
        self,
        class_agnostic_prompts: Sequence[str] = ("anomaly", "defect"),
        class_specific_prompts: Sequence[str] = ("black hole", "white bubble"),
        object_prompt: str = "object",
        theta_iou: float = DEFAULT_THETA_IOU,
        theta_area: float = DEFAULT_THETA_AREA,
        overlap_mode: str = OVERLAP_IOR,
        n_neighbors: int = DEFAULT_N_NEIGHBORS,
        top_k: int = DEFAULT_TOP_K,
        dedupe_iou: float = DEFAULT_DEDUPE_IOU,
        use_property_filter: bool = True,
        use_saliency: bool = True,
        use_confidence: bool = True,
        input_size: tuple = DEFAULT_INPUT_SIZE,
    ):
        self.class_agnostic_prompts = class_agnostic_prompts
        self.class_specific_prompts = class_specific_prompts
        self.object_prompt = object_prompt
        self.theta_iou = theta_iou
        self.theta_area = theta_area
        self.overlap_mode = overlap_mode
        self.n_neighbors = n_neighbors
        self.top_k = top_k
        self.dedupe_iou = dedupe_iou
        self.use_property_filter = use_property_filter
        self.use_saliency = use_saliency
        self.use_confidence = use_confidence
        self.input_size = input_size

    def _config(self) -> PipelineConfig:
        return PipelineConfig(
            class_agnostic_prompts=tuple(self.class_agnostic_prompts),
            class_specific_prompts=tuple(self.class_specific_prompts),
            object_prompt=self.object_prompt,
            theta_iou=self.theta_iou,
            theta_area=self.theta_area,
            overlap_mode=self.overlap_mode,
            n_neighbors=self.n_neighbors,
            top_k=self.top_k,
            dedupe_iou=self.dedupe_iou,
            toggles=PipelineToggles(
                property_filter=self.use_property_filter,
                saliency_prompt=self.use_saliency,
                confidence_prompt=self.use_confidence,
            ),
            input_size=tuple(self.input_size),
        )

    @classmethod
    def from_config(cls, cfg: PipelineConfig) -> "AnomalySegmenter":
        return cls(
            class_agnostic_prompts=cfg.class_agnostic_prompts,
            class_specific_prompts=cfg.class_specific_prompts,
            object_prompt=cfg.object_prompt,
            theta_iou=cfg.theta_iou,
            theta_area=cfg.theta_area,
            overlap_mode=cfg.overlap_mode,
            n_neighbors=cfg.n_neighbors,
            top_k=cfg.top_k,
            dedupe_iou=cfg.dedupe_iou,
            use_property_filter=cfg.toggles.property_filter,
            use_saliency=cfg.toggles.saliency_prompt,
            use_confidence=cfg.toggles.confidence_prompt,
            input_size=cfg.input_size,
        )

    def fit(self, X: Optional[CaseOrCases] = None, y=None) -> "AnomalySegmenter":
        """Validate parameters; there is nothing to learn."""
        self.config_ = self._config()
        return self

    def predict(self, X: CaseOrCases):
        """Anomaly map for one bundle, or a list of maps for an iterable."""
        cfg = self._config()
        if isinstance(X, CaseBundle):
            amap, _ = run_pipeline(X, cfg)
            return amap
        return [run_pipeline(case, cfg)[0] for case in X]

    def predict_trace(self, case: CaseBundle) -> tuple[AnomalyMap, PipelineTrace]:
        """Anomaly map plus the full stage trace for one bundle."""
        return run_pipeline(case, self._config())

    def transform(self, X: CaseOrCases):
        """Alias of :meth:`predict`, for transformer-style composition."""
        return self.predict(X)

    def score(self, X: Iterable[CaseBundle], y=None) -> float:
        """Pooled max pixel F1 against ground truths.

        ``y`` may supply the truth masks; otherwise each bundle must carry
        its own ``ground_truth``.
        """
        cases = [X] if isinstance(X, CaseBundle) else list(X)
        truths = list(y) if y is not None else [c.ground_truth for c in cases]
        if any(t is None for t in truths):
            raise ValueError("score needs ground-truth masks")
        preds = self.predict(cases)
        f1, _ = max_f1_pixel(preds, truths)
        return f1
