"""Core domain types shared across the engine.

Everything here is immutable after construction: dataclasses are frozen and
numpy buffers are marked read-only, so instances can be shared freely across
workers. The heavier operations (saliency, fusion, metrics) live in their own
modules; this one only knows about geometry, masks and configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

OVERLAP_IOR = "intersection-over-region"
OVERLAP_IOU = "intersection-over-union"
OVERLAP_MODES = (OVERLAP_IOR, OVERLAP_IOU)

# Published operating defaults: 400 nearest neighbours for the saliency
# statistic, 5 fused regions, and a 400x400 working resolution upstream.
DEFAULT_N_NEIGHBORS = 400
DEFAULT_TOP_K = 5
DEFAULT_INPUT_SIZE = (400, 400)
DEFAULT_THETA_IOU = 0.5
DEFAULT_THETA_AREA = 0.9
DEFAULT_DEDUPE_IOU = 0.9


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ImageRef:
    """An 8-bit RGB raster plus where it came from."""

    width: int
    height: int
    pixel_data: np.ndarray  # (height, width, 3) uint8
    source_path: str = ""

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image dimensions must be positive, got {self.width}x{self.height}")
        px = np.asarray(self.pixel_data, dtype=np.uint8)
        if px.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel_data shape {px.shape} does not match {self.height}x{self.width}x3"
            )
        object.__setattr__(self, "pixel_data", _readonly(px))


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in image coordinates, real-valued corners."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(f"degenerate box: ({self.x0},{self.y0})..({self.x1},{self.y1})")

    def clip(self, width: float, height: float) -> "BBox":
        """Clamp the corners to [0, width] x [0, height]."""
        return BBox(
            min(max(self.x0, 0.0), width),
            min(max(self.y0, 0.0), height),
            min(max(self.x1, 0.0), width),
            min(max(self.y1, 0.0), height),
        )

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def iou(self, other: "BBox") -> float:
        """Rectangle IoU; 0 when either box has zero area."""
        ix0, iy0 = max(self.x0, other.x0), max(self.y0, other.y0)
        ix1, iy1 = min(self.x1, other.x1), min(self.y1, other.y1)
        inter = max(0.0, ix1 - ix0) * max(0.0, iy1 - iy0)
        union = self.area + other.area - inter
        return inter / union if union > 0 else 0.0

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class BinaryMask:
    """A per-pixel flag plane matching its image's dimensions."""

    bits: np.ndarray  # (height, width) bool

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {b.shape}")
        object.__setattr__(self, "bits", _readonly(b.astype(bool, copy=True)))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def same_shape(self, other: "BinaryMask") -> bool:
        return self.bits.shape == other.bits.shape


@dataclass(frozen=True)
class RegionCandidate:
    """One proposed anomaly region with its scores.

    ``score`` is the detector confidence for ``phrase``; ``saliency_prompt``
    and ``calibrated_score`` are filled in by the pipeline's rescoring stage.
    """

    box: BBox
    mask: BinaryMask
    phrase: str
    score: float
    saliency_prompt: Optional[float] = None
    calibrated_score: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"candidate score {self.score} outside [0, 1]")
        if self.saliency_prompt is not None and self.saliency_prompt < 0:
            raise ValueError(f"saliency prompt {self.saliency_prompt} negative")
        if self.calibrated_score is not None and self.calibrated_score < 0:
            raise ValueError(f"calibrated score {self.calibrated_score} negative")

    def with_scores(self, saliency_prompt: float, calibrated_score: float) -> "RegionCandidate":
        return replace(self, saliency_prompt=saliency_prompt, calibrated_score=calibrated_score)


@dataclass(frozen=True)
class FeatureMap:
    """Dense per-position feature tensor from a pretrained backbone."""

    values: np.ndarray  # (fheight, fwidth, depth) float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"feature map must be 3-D, got shape {v.shape}")
        if v.shape[0] * v.shape[1] < 2:
            raise ValueError("feature map needs at least 2 grid positions")
        if not np.all(np.isfinite(v)):
            idx = np.unravel_index(int(np.argmin(np.isfinite(v))), v.shape)
            raise ValueError(f"non-finite feature value at index {idx}")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def fheight(self) -> int:
        return self.values.shape[0]

    @property
    def fwidth(self) -> int:
        return self.values.shape[1]

    @property
    def depth(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class SaliencyMap:
    """Per-pixel feature-dissimilarity field; values live in [0, 2]."""

    values: np.ndarray  # (height, width) float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"saliency map must be 2-D, got shape {v.shape}")
        if v.size and (v.min() < 0.0 or v.max() > 2.0):
            raise ValueError(f"saliency values outside [0, 2]: min={v.min()}, max={v.max()}")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AnomalyMap:
    """Raw fused anomaly scores; 0 means no region covered the pixel.

    Values are intentionally not normalized to [0, 1]: the metrics sweep
    thresholds over the raw range, and normalization is applied only for
    display (see the viz command).
    """

    values: np.ndarray  # (height, width) float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"anomaly map must be 2-D, got shape {v.shape}")
        if v.size and v.min() < 0.0:
            raise ValueError(f"anomaly map has negative value {v.min()}")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PipelineToggles:
    """Independent switches for the three regularization stages."""

    property_filter: bool = True
    saliency_prompt: bool = True
    confidence_prompt: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the pipeline is parameterized by.

    ``input_size`` records the working resolution upstream extractors are
    expected to use; the engine itself never resizes, it only threads the
    value through to run traces so a run is self-describing.
    """

    class_agnostic_prompts: tuple[str, ...] = ("anomaly", "defect")
    class_specific_prompts: tuple[str, ...] = ("black hole", "white bubble")
    object_prompt: str = "object"
    theta_iou: float = DEFAULT_THETA_IOU
    theta_area: float = DEFAULT_THETA_AREA
    overlap_mode: str = OVERLAP_IOR
    n_neighbors: int = DEFAULT_N_NEIGHBORS
    top_k: int = DEFAULT_TOP_K
    dedupe_iou: float = DEFAULT_DEDUPE_IOU
    toggles: PipelineToggles = field(default_factory=PipelineToggles)
    input_size: tuple[int, int] = DEFAULT_INPUT_SIZE

    def __post_init__(self):
        object.__setattr__(self, "class_agnostic_prompts", tuple(self.class_agnostic_prompts))
        object.__setattr__(self, "class_specific_prompts", tuple(self.class_specific_prompts))
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        if not self.class_agnostic_prompts and not self.class_specific_prompts:
            raise ValueError("at least one language prompt is required")
        if not (0.0 <= self.theta_iou <= 1.0):
            raise ValueError(f"theta_iou {self.theta_iou} outside [0, 1]")
        if not (0.0 < self.theta_area <= 1.0):
            raise ValueError(f"theta_area {self.theta_area} outside (0, 1]")
        if self.overlap_mode not in OVERLAP_MODES:
            raise ValueError(f"unknown overlap mode {self.overlap_mode!r}")
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not (0.0 <= self.dedupe_iou <= 1.0):
            raise ValueError(f"dedupe_iou {self.dedupe_iou} outside [0, 1]")

    @property
    def language_prompts(self) -> tuple[str, ...]:
        return self.class_agnostic_prompts + self.class_specific_prompts

    def to_dict(self) -> dict:
        return {
            "class_agnostic_prompts": list(self.class_agnostic_prompts),
            "class_specific_prompts": list(self.class_specific_prompts),
            "object_prompt": self.object_prompt,
            "theta_iou": self.theta_iou,
            "theta_area": self.theta_area,
            "overlap_mode": self.overlap_mode,
            "n_neighbors": self.n_neighbors,
            "top_k": self.top_k,
            "dedupe_iou": self.dedupe_iou,
            "toggles": {
                "property_filter": self.toggles.property_filter,
                "saliency_prompt": self.toggles.saliency_prompt,
                "confidence_prompt": self.toggles.confidence_prompt,
            },
            "input_size": list(self.input_size),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        """Build a config from a plain dict; unknown keys are ignored."""
        kwargs = {}
        for key in (
            "class_agnostic_prompts",
            "class_specific_prompts",
            "object_prompt",
            "theta_iou",
            "theta_area",
            "overlap_mode",
            "n_neighbors",
            "top_k",
            "dedupe_iou",
            "input_size",
        ):
            if key in data:
                kwargs[key] = data[key]
        if "toggles" in data:
            kwargs["toggles"] = PipelineToggles(**{
                k: bool(v) for k, v in data["toggles"].items()
                if k in ("property_filter", "saliency_prompt", "confidence_prompt")
            })
        return cls(**kwargs)


@dataclass(frozen=True)
class CaseBundle:
    """One inspection case: image, proposals, object region, features, GT."""

    image: ImageRef
    candidates: tuple[RegionCandidate, ...]
    features: FeatureMap
    object_region: Optional[RegionCandidate] = None
    ground_truth: Optional[BinaryMask] = None

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        shape = (self.image.height, self.image.width)
        for i, cand in enumerate(self.candidates):
            if cand.mask.bits.shape != shape:
                raise ValueError(
                    f"candidate {i} mask shape {cand.mask.bits.shape} does not match image {shape}"
                )
        if self.object_region is not None and self.object_region.mask.bits.shape != shape:
            raise ValueError("object region mask does not match image dimensions")
        if self.ground_truth is not None and self.ground_truth.bits.shape != shape:
            raise ValueError("ground truth mask does not match image dimensions")


def mask_area(mask: BinaryMask) -> int:
    """Number of set pixels."""
    return mask.area


def mask_overlap(a: BinaryMask, b: BinaryMask, mode: str = OVERLAP_IOU) -> float:
    """Overlap between two masks.

    ``intersection-over-union`` is symmetric; ``intersection-over-region``
    normalizes by the area of the *first* mask. Degenerate 0/0 cases
    (both empty, or an empty first mask in region mode) return 0.
    """
    if not a.same_shape(b):
        raise ValueError(f"mask dimensions differ: {a.bits.shape} vs {b.bits.shape}")
    inter = int(np.logical_and(a.bits, b.bits).sum())
    if mode == OVERLAP_IOU:
        union = int(np.logical_or(a.bits, b.bits).sum())
        return inter / union if union > 0 else 0.0
    if mode == OVERLAP_IOR:
        denom = a.area
        return inter / denom if denom > 0 else 0.0
    raise ValueError(f"unknown overlap mode {mode!r}")


def box_to_mask(box: BBox, width: int, height: int) -> BinaryMask:
    """Rasterize a box: a pixel is set when its center lies inside the box.

    Pixel centers sit on the integer grid and the box is half-open, so a
    full-image box (0, 0, width, height) covers every pixel exactly once.
    """
    xs = np.arange(width)
    ys = np.arange(height)
    col_in = (xs >= box.x0) & (xs < box.x1)
    row_in = (ys >= box.y0) & (ys < box.y1)
    return BinaryMask(np.outer(row_in, col_in))


def mask_to_box(mask: BinaryMask) -> BBox:
    """Tight box around the set pixels (empty mask gives a zero box)."""
    rows, cols = np.nonzero(mask.bits)
    if rows.size == 0:
        return BBox(0.0, 0.0, 0.0, 0.0)
    return BBox(float(cols.min()), float(rows.min()), float(cols.max() + 1), float(rows.max() + 1))


def full_image_region(width: int, height: int, phrase: str = "object") -> RegionCandidate:
    """The whole image treated as the inspected object."""
    return RegionCandidate(
        box=BBox(0.0, 0.0, float(width), float(height)),
        mask=BinaryMask(np.ones((height, width), dtype=bool)),
        phrase=phrase,
        score=1.0,
    )


def candidates_from_arrays(
    boxes: Sequence[Sequence[float]],
    masks: Sequence[np.ndarray],
    phrases: Sequence[str],
    scores: Sequence[float],
) -> list[RegionCandidate]:
    """Convenience constructor used by tests and fixtures."""
    if not (len(boxes) == len(masks) == len(phrases) == len(scores)):
        raise ValueError("boxes, masks, phrases and scores must have equal length")
    out = []
    for bx, m, p, s in zip(boxes, masks, phrases, scores):
        out.append(RegionCandidate(BBox(*bx), BinaryMask(m), str(p), float(s)))
    return out
