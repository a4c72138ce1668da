"""Model adapters and dataset converters for the anomaly-segmentation engine.

Runs the detector / segmenter / backbone stack over inspection datasets and
exports case bundles in the engine's interchange formats. This package
never imports the engine: the tensor files, mask PNGs and manifest JSON are
the contract between the two sides.
"""

from .backends import (
    BoxFillRefiner,
    ContrastBlobDetector,
    GridStatsExtractor,
    WideResNetExtractor,
    build_backends,
)
from .config import AdapterConfig, PromptSet
from .datasets import LAYOUT_MVTEC, LAYOUT_VISA, Sample, discover_samples
from .extract import build_case, extract_features, extract_regions, refine_masks

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "BoxFillRefiner",
    "ContrastBlobDetector",
    "GridStatsExtractor",
    "LAYOUT_MVTEC",
    "LAYOUT_VISA",
    "PromptSet",
    "Sample",
    "WideResNetExtractor",
    "build_backends",
    "build_case",
    "discover_samples",
    "extract_features",
    "extract_regions",
    "refine_masks",
]
