"""The candidate-regularization pipeline.

Stages, each independently toggleable:

1. merge per-phrase candidate runs, suppressing near-duplicate boxes;
2. property filtering against the inspected object (location + area rules);
3. saliency rescoring: multiply detector confidence by the exponential
   mask-mean of a feature-neighborhood saliency map;
4. top-K selection and per-pixel score averaging into the anomaly map.

Everything is a pure function of (case, config); traces make each run
self-describing and byte-reproducible.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    AnomalyMap,
    BinaryMask,
    CaseBundle,
    FeatureMap,
    PipelineConfig,
    RegionCandidate,
    SaliencyMap,
    full_image_region,
    mask_area,
    mask_overlap,
)


@dataclass
class CandidateTrace:
    """Score evolution of one merged candidate through the stages."""

    phrase: str
    score: float
    saliency_prompt: Optional[float] = None
    calibrated_score: Optional[float] = None
    filtered_out: bool = False
    selected: bool = False

    def to_dict(self) -> dict:
        return {
            "phrase": self.phrase,
            "score": self.score,
            "saliency_prompt": self.saliency_prompt,
            "calibrated_score": self.calibrated_score,
            "filtered_out": self.filtered_out,
            "selected": self.selected,
        }


@dataclass
class PipelineTrace:
    """Per-stage candidate counts, score evolution and timings for one run."""

    stage_counts: dict = field(default_factory=dict)
    candidates: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    image_size: tuple[int, int] = (0, 0)

    def to_dict(self, include_timings: bool = False) -> dict:
        """Plain-dict form; timings are off by default so that trace files
        from identical runs stay byte-identical."""
        out = {
            "image_size": list(self.image_size),
            "stage_counts": dict(self.stage_counts),
            "candidates": [c.to_dict() for c in self.candidates],
            "notes": list(self.notes),
            "config": dict(self.config),
        }
        if include_timings:
            out["timings"] = dict(self.timings)
        return out


def merge_prompt_runs(
    runs: Sequence[Sequence[RegionCandidate]], dedupe_iou: float
) -> list[RegionCandidate]:
    """Union of per-prompt candidate runs with box-level duplicate collapse.

    Candidates are visited in descending score (ties: earlier run, earlier
    index); one is kept only if its box IoU with every already kept box is
    at most ``dedupe_iou``, so duplicate chains collapse onto their
    highest-scoring member. Output stays in that visit order.
    """
    tagged = [
        (cand.score, run_idx, pos_idx, cand)
        for run_idx, run in enumerate(runs)
        for pos_idx, cand in enumerate(run)
    ]
    tagged.sort(key=lambda t: (-t[0], t[1], t[2]))
    kept: list[RegionCandidate] = []
    for _, _, _, cand in tagged:
        if all(cand.box.iou(other.box) <= dedupe_iou for other in kept):
            kept.append(cand)
    return kept


def filter_by_property(
    candidates: Sequence[RegionCandidate],
    object_region: Optional[RegionCandidate],
    cfg: PipelineConfig,
) -> list[RegionCandidate]:
    """Keep candidates that satisfy the location and area rules.

    Location: overlap between the candidate mask and the object mask (in the
    configured mode) must reach ``theta_iou``. Area: the candidate must not
    exceed ``theta_area`` times the object area, boundary inclusive. Without
    an object region the whole image plays that role, which makes the
    location rule trivially true.
    """
    if not candidates:
        return []
    if object_region is None:
        first = candidates[0]
        object_region = full_image_region(first.mask.width, first.mask.height)
        check_location = False
    else:
        check_location = True

    area_limit = cfg.theta_area * mask_area(object_region.mask)
    kept = []
    for cand in candidates:
        if check_location:
            overlap = mask_overlap(cand.mask, object_region.mask, cfg.overlap_mode)
            if overlap < cfg.theta_iou:
                continue
        if mask_area(cand.mask) > area_limit:
            continue
        kept.append(cand)
    return kept


def bilinear_upsample(grid: np.ndarray, out_width: int, out_height: int) -> np.ndarray:
    """Resize a 2-D grid with half-pixel-aligned bilinear interpolation."""
    fh, fw = grid.shape
    sy = np.clip((np.arange(out_height) + 0.5) * fh / out_height - 0.5, 0.0, fh - 1.0)
    sx = np.clip((np.arange(out_width) + 0.5) * fw / out_width - 0.5, 0.0, fw - 1.0)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1 = np.minimum(y0 + 1, fh - 1)
    x1 = np.minimum(x0 + 1, fw - 1)
    wy = (sy - y0)[:, None]
    wx = (sx - x0)[None, :]
    top = grid[np.ix_(y0, x0)] * (1 - wx) + grid[np.ix_(y0, x1)] * wx
    bot = grid[np.ix_(y1, x0)] * (1 - wx) + grid[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def compute_saliency(
    features: FeatureMap, n_neighbors: int, out_width: int, out_height: int
) -> SaliencyMap:
    """Mean cosine distance to the nearest neighbor features, upsampled.

    For every grid position the feature vector is L2-normalized and compared
    against every other position of the same map (self excluded); the value
    is the mean of the ``min(n_neighbors, positions - 1)`` smallest cosine
    distances, so it lives in [0, 2]. The coarse grid is then bilinearly
    upsampled to the requested pixel resolution.
    """
    fh, fw, depth = features.fheight, features.fwidth, features.depth
    positions = fh * fw
    if positions < 2:
        raise ValueError("saliency needs at least 2 feature grid positions")

    flat = features.values.reshape(positions, depth)
    norms = np.linalg.norm(flat, axis=1, keepdims=True)
    unit = np.divide(flat, norms, out=np.zeros_like(flat), where=norms > 0)

    dist = 1.0 - unit @ unit.T
    np.fill_diagonal(dist, np.inf)
    n_eff = min(n_neighbors, positions - 1)
    nearest = np.partition(dist, n_eff - 1, axis=1)[:, :n_eff]
    grid = np.clip(nearest, 0.0, 2.0).mean(axis=1).reshape(fh, fw)

    up = bilinear_upsample(grid, out_width, out_height)
    return SaliencyMap(np.clip(up, 0.0, 2.0))


def saliency_prompt(region: RegionCandidate, smap: SaliencyMap) -> float:
    """Exponential of the mask-mean saliency; in [1, e^2] for valid inputs."""
    if region.mask.bits.shape != smap.values.shape:
        raise ValueError(
            f"mask shape {region.mask.bits.shape} does not match"
            f" saliency map {smap.values.shape}"
        )
    area = region.mask.area
    if area == 0:
        raise ValueError("saliency prompt of an empty mask is undefined")
    mean = float(smap.values[region.mask.bits].sum() / area)
    return math.exp(mean)


def rescore(
    candidates: Sequence[RegionCandidate], smap: SaliencyMap
) -> list[RegionCandidate]:
    """Multiply each detector score by its region's saliency prompt."""
    out = []
    for cand in candidates:
        prompt = saliency_prompt(cand, smap)
        out.append(cand.with_scores(prompt, prompt * cand.score))
    return out


def select_topk(candidates: Sequence[RegionCandidate], k: int) -> list[RegionCandidate]:
    """The k candidates with the largest calibrated score, stable on ties."""
    for i, cand in enumerate(candidates):
        if cand.calibrated_score is None:
            raise ValueError(f"candidate {i} has no calibrated score")
    order = sorted(range(len(candidates)), key=lambda i: (-candidates[i].calibrated_score, i))
    return [candidates[i] for i in order[: max(k, 0)]]


def fuse_topk(
    selected: Sequence[RegionCandidate], width: int, height: int
) -> AnomalyMap:
    """Per-pixel mean of the calibrated scores of the covering regions."""
    num = np.zeros((height, width))
    cov = np.zeros((height, width))
    for cand in selected:
        if cand.mask.bits.shape != (height, width):
            raise ValueError("selected region mask does not match output dimensions")
        num += cand.mask.bits * cand.calibrated_score
        cov += cand.mask.bits
    values = np.divide(num, cov, out=np.zeros_like(num), where=cov > 0)
    return AnomalyMap(values)


def _group_by_phrase(candidates: Sequence[RegionCandidate]) -> list[list[RegionCandidate]]:
    """Reconstruct per-prompt runs from a flat candidate list.

    Upstream concatenates one run per language prompt; grouping by phrase in
    first-appearance order recovers that structure for the merge stage.
    """
    runs: dict[str, list[RegionCandidate]] = {}
    for cand in candidates:
        runs.setdefault(cand.phrase, []).append(cand)
    return list(runs.values())


def run_pipeline(case: CaseBundle, cfg: PipelineConfig) -> tuple[AnomalyMap, PipelineTrace]:
    """Run every enabled stage and fuse the survivors into an anomaly map.

    With all toggles off this reduces to plain fusion of the raw detector
    output. An empty candidate list short-circuits to an all-zero map.
    """
    width, height = case.image.width, case.image.height
    trace = PipelineTrace(config=cfg.to_dict(), image_size=(width, height))
    trace.stage_counts["input"] = len(case.candidates)

    t0 = time.perf_counter()
    merged = merge_prompt_runs(_group_by_phrase(case.candidates), cfg.dedupe_iou)
    trace.timings["merge"] = time.perf_counter() - t0
    trace.stage_counts["merged"] = len(merged)
    trace.candidates = [CandidateTrace(c.phrase, c.score) for c in merged]

    if not merged:
        trace.notes.append("no candidates; emitting zero map")
        trace.stage_counts["filtered"] = 0
        trace.stage_counts["selected"] = 0
        return AnomalyMap(np.zeros((height, width))), trace

    index_of = {id(c): i for i, c in enumerate(merged)}

    if cfg.toggles.property_filter:
        t0 = time.perf_counter()
        filtered = filter_by_property(merged, case.object_region, cfg)
        trace.timings["property_filter"] = time.perf_counter() - t0
        surviving = {id(c) for c in filtered}
        for cand in merged:
            if id(cand) not in surviving:
                trace.candidates[index_of[id(cand)]].filtered_out = True
        if case.object_region is None:
            trace.notes.append("no object region; location rule passed trivially")
    else:
        filtered = list(merged)
        trace.notes.append("property filter disabled")
    trace.stage_counts["filtered"] = len(filtered)

    if cfg.toggles.saliency_prompt and filtered:
        t0 = time.perf_counter()
        smap = compute_saliency(case.features, cfg.n_neighbors, width, height)
        rescored = []
        for cand in filtered:
            prompt = saliency_prompt(cand, smap)
            new = cand.with_scores(prompt, prompt * cand.score)
            rescored.append(new)
            rec = trace.candidates[index_of[id(cand)]]
            rec.saliency_prompt = prompt
            rec.calibrated_score = new.calibrated_score
            index_of[id(new)] = index_of[id(cand)]
        trace.timings["saliency"] = time.perf_counter() - t0
    else:
        if not cfg.toggles.saliency_prompt:
            trace.notes.append("saliency prompt disabled; calibrated score = raw score")
        rescored = []
        for cand in filtered:
            new = cand.with_scores(1.0, cand.score)
            rescored.append(new)
            trace.candidates[index_of[id(cand)]].calibrated_score = new.calibrated_score
            index_of[id(new)] = index_of[id(cand)]

    if cfg.toggles.confidence_prompt:
        t0 = time.perf_counter()
        selected = select_topk(rescored, cfg.top_k)
        trace.timings["confidence"] = time.perf_counter() - t0
    else:
        selected = list(rescored)
        trace.notes.append("confidence prompt disabled; fusing all candidates")
    trace.stage_counts["selected"] = len(selected)
    for cand in selected:
        trace.candidates[index_of[id(cand)]].selected = True

    t0 = time.perf_counter()
    amap = fuse_topk(selected, width, height)
    trace.timings["fuse"] = time.perf_counter() - t0
    return amap, trace
