"""Training-free anomaly segmentation via prompt-style regularizers.

The engine consumes region proposals, an object region and a backbone
feature map produced upstream (real detectors or synthetic fixtures), then
filters, rescores and fuses them into a per-pixel anomaly map.
"""

from .core import (
    AnomalyMap,
    BBox,
    BinaryMask,
    CaseBundle,
    FeatureMap,
    ImageRef,
    PipelineConfig,
    PipelineToggles,
    RegionCandidate,
    SaliencyMap,
    box_to_mask,
    mask_area,
    mask_overlap,
)
from .estimator import AnomalySegmenter
from .interchange import (
    load_case,
    read_anomaly_map,
    read_tensor,
    write_anomaly_map,
    write_case,
    write_tensor,
)
from .metrics import MetricsReport, aggregate, connected_components, max_f1_pixel, max_f1_region
from .pipeline import (
    PipelineTrace,
    compute_saliency,
    filter_by_property,
    fuse_topk,
    merge_prompt_runs,
    rescore,
    run_pipeline,
    saliency_prompt,
    select_topk,
)

__version__ = "0.1.0"

__all__ = [
    "AnomalyMap",
    "AnomalySegmenter",
    "BBox",
    "BinaryMask",
    "CaseBundle",
    "FeatureMap",
    "ImageRef",
    "MetricsReport",
    "PipelineConfig",
    "PipelineToggles",
    "PipelineTrace",
    "RegionCandidate",
    "SaliencyMap",
    "aggregate",
    "box_to_mask",
    "compute_saliency",
    "connected_components",
    "filter_by_property",
    "fuse_topk",
    "load_case",
    "mask_area",
    "mask_overlap",
    "max_f1_pixel",
    "max_f1_region",
    "merge_prompt_runs",
    "read_anomaly_map",
    "read_tensor",
    "rescore",
    "run_pipeline",
    "saliency_prompt",
    "select_topk",
    "write_anomaly_map",
    "write_case",
    "write_tensor",
]
