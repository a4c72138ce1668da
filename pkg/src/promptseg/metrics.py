"""Evaluation metrics: max-F1 over pixels and over matched regions.

Both metrics sweep a global threshold over the pooled predictions and report
the best F1 together with the threshold that achieved it. Binarization is
``value >= threshold``; for the pixel metric the candidate thresholds are
all distinct pooled values except the global minimum, so an all-zero map can
never trade as an all-positive prediction, and any strictly increasing
rescoring of the values leaves the result bit-identical (the operating
points are the same pixel sets, only their labels move).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .core import AnomalyMap, BinaryMask

OVERLAP_KIND_IOU = "iou"
OVERLAP_KIND_IOGT = "intersection-over-gt"

# Past this many pooled pixels the exact sweep switches to 1000 equal-width
# bins; the error bound against the exact mode is ~0.005 absolute.
QUANTIZE_ABOVE = 10_000_000
N_BINS = 1000


def _pool(
    predictions: Sequence[AnomalyMap], truths: Sequence[BinaryMask]
) -> tuple[np.ndarray, np.ndarray]:
    if not predictions:
        raise ValueError("no prediction/truth pairs to evaluate")
    if len(predictions) != len(truths):
        raise ValueError(
            f"got {len(predictions)} predictions but {len(truths)} truths"
        )
    for i, (p, t) in enumerate(zip(predictions, truths)):
        if p.values.shape != t.bits.shape:
            raise ValueError(
                f"case {i}: prediction {p.values.shape} vs truth {t.bits.shape}"
            )
    values = np.concatenate([p.values.ravel() for p in predictions])
    labels = np.concatenate([t.bits.ravel() for t in truths])
    return values, labels


def _f1_vector(tp: np.ndarray, fp: np.ndarray, fn: np.ndarray) -> np.ndarray:
    denom = 2 * tp + fp + fn
    out = np.zeros(tp.shape, dtype=np.float64)
    np.divide(2 * tp, denom, out=out, where=denom > 0)
    return out


def _exact_sweep(values: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    order = np.argsort(-values, kind="stable")
    v_sorted = values[order]
    y_sorted = labels[order]
    tp_cum = np.cumsum(y_sorted)

    is_last = np.empty(v_sorted.size, dtype=bool)
    is_last[-1] = True
    is_last[:-1] = v_sorted[:-1] != v_sorted[1:]
    ends = np.nonzero(is_last)[0]
    # Drop the cut at the global minimum: it would predict every pixel
    # positive, which is meaningless for a score where 0 means "no region".
    ends = ends[:-1]
    if ends.size == 0:
        return 0.0, 0.0

    tp = tp_cum[ends].astype(np.float64)
    fp = (ends + 1) - tp
    fn = float(labels.sum()) - tp
    f1 = _f1_vector(tp, fp, fn)
    best = int(np.argmax(f1))  # descending values: ties go to the largest threshold
    return float(f1[best]), float(v_sorted[ends[best]])


def _quantized_sweep(
    values: np.ndarray, labels: np.ndarray, n_bins: int = N_BINS
) -> tuple[float, float]:
    vmin = float(values.min())
    vmax = float(values.max())
    if vmax == vmin:
        return 0.0, 0.0
    scaled = (values - vmin) / (vmax - vmin) * n_bins
    idx = np.clip(scaled.astype(np.int64), 0, n_bins - 1)
    pos_hist = np.bincount(idx[labels], minlength=n_bins).astype(np.float64)
    all_hist = np.bincount(idx, minlength=n_bins).astype(np.float64)
    tp_suffix = np.cumsum(pos_hist[::-1])[::-1]
    all_suffix = np.cumsum(all_hist[::-1])[::-1]

    ks = np.arange(n_bins - 1, 0, -1)  # descending so ties keep the largest edge
    tp = tp_suffix[ks]
    fp = all_suffix[ks] - tp
    fn = float(labels.sum()) - tp
    f1 = _f1_vector(tp, fp, fn)
    best = int(np.argmax(f1))
    threshold = vmin + (vmax - vmin) * ks[best] / n_bins
    return float(f1[best]), float(threshold)


def max_f1_pixel(
    predictions: Sequence[AnomalyMap],
    truths: Sequence[BinaryMask],
    mode: str = "auto",
) -> tuple[float, float]:
    """Best pooled pixel F1 over the threshold sweep, with its threshold.

    ``mode`` is ``exact`` (every distinct value), ``quantized`` (1000
    equal-width bins) or ``auto``, which quantizes once the pooled pixel
    count exceeds 10^7.
    """
    values, labels = _pool(predictions, truths)
    if mode == "auto":
        mode = "quantized" if values.size > QUANTIZE_ABOVE else "exact"
    if mode == "exact":
        return _exact_sweep(values, labels)
    if mode == "quantized":
        return _quantized_sweep(values, labels)
    raise ValueError(f"unknown sweep mode {mode!r}")


_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def connected_components(mask: BinaryMask) -> list[BinaryMask]:
    """8-connected components in raster order of their first pixel."""
    labels, count = ndimage.label(mask.bits, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []
    flat = labels.ravel()
    first = np.full(count + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat, np.arange(flat.size))
    order = np.argsort(first[1:], kind="stable") + 1
    return [BinaryMask(labels == lbl) for lbl in order]


def _component_arrays(mask_bits: np.ndarray) -> list[np.ndarray]:
    labels, count = ndimage.label(mask_bits, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []
    flat = labels.ravel()
    first = np.full(count + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat, np.arange(flat.size))
    order = np.argsort(first[1:], kind="stable") + 1
    return [labels == lbl for lbl in order]


def _component_overlap(pred: np.ndarray, gt: np.ndarray, kind: str) -> float:
    inter = int(np.logical_and(pred, gt).sum())
    if inter == 0:
        return 0.0
    if kind == OVERLAP_KIND_IOU:
        union = int(np.logical_or(pred, gt).sum())
        return inter / union
    if kind == OVERLAP_KIND_IOGT:
        return inter / int(gt.sum())
    raise ValueError(f"unknown overlap kind {kind!r}")


def match_components(
    pred_comps: Sequence[np.ndarray],
    gt_comps: Sequence[np.ndarray],
    min_overlap: float = 0.6,
    overlap_kind: str = OVERLAP_KIND_IOU,
) -> tuple[int, int, int]:
    """Greedy one-to-one matching in descending overlap; strict cutoff.

    Returns (matched pairs, unmatched predictions, unmatched ground truths).
    """
    edges = []
    for i, p in enumerate(pred_comps):
        for j, g in enumerate(gt_comps):
            ov = _component_overlap(p, g, overlap_kind)
            if ov > min_overlap:
                edges.append((-ov, i, j))
    edges.sort()
    used_pred: set[int] = set()
    used_gt: set[int] = set()
    matches = 0
    for _, i, j in edges:
        if i not in used_pred and j not in used_gt:
            used_pred.add(i)
            used_gt.add(j)
            matches += 1
    return matches, len(pred_comps) - matches, len(gt_comps) - matches


def max_f1_region(
    predictions: Sequence[AnomalyMap],
    truths: Sequence[BinaryMask],
    min_overlap: float = 0.6,
    overlap_kind: str = OVERLAP_KIND_IOU,
    n_thresholds: int = 50,
) -> tuple[float, float]:
    """Best pooled region F1 over a quantile threshold sweep.

    At each threshold the binarized prediction decomposes into 8-connected
    components, which are greedily matched one-to-one against ground-truth
    components; a pair counts only when its overlap strictly exceeds
    ``min_overlap``. Thresholds are evenly spaced quantiles of the pooled
    positive predicted values (component labeling per threshold is too
    costly for an exact sweep).
    """
    values, _ = _pool(predictions, truths)
    positive = values[values > 0]
    if positive.size == 0:
        return 0.0, 0.0
    thresholds = np.unique(np.quantile(positive, np.linspace(0.0, 1.0, n_thresholds)))

    gt_comps = [_component_arrays(t.bits) for t in truths]

    best_f1, best_t = 0.0, 0.0
    for t in thresholds[::-1]:  # descending: ties keep the largest threshold
        tp = fp = fn = 0
        for pred, comps in zip(predictions, gt_comps):
            pred_comps = _component_arrays(pred.values >= t)
            m, unmatched_pred, unmatched_gt = match_components(
                pred_comps, comps, min_overlap, overlap_kind
            )
            tp += m
            fp += unmatched_pred
            fn += unmatched_gt
        denom = 2 * tp + fp + fn
        f1 = 2 * tp / denom if denom > 0 else 0.0
        if f1 > best_f1:
            best_f1, best_t = f1, float(t)
    return best_f1, best_t


@dataclass
class CategoryMetrics:
    f1_pixel_max: float
    threshold_pixel: float
    f1_region_max: float
    threshold_region: float
    case_count: int

    def to_dict(self) -> dict:
        return {
            "f1_pixel_max": self.f1_pixel_max,
            "threshold_pixel": self.threshold_pixel,
            "f1_region_max": self.f1_region_max,
            "threshold_region": self.threshold_region,
            "case_count": self.case_count,
        }


@dataclass
class MetricsReport:
    """Pooled and per-category max-F1 results for one evaluation run."""

    f1_pixel_max: float = 0.0
    threshold_pixel: float = 0.0
    f1_region_max: float = 0.0
    threshold_region: float = 0.0
    per_category: dict = field(default_factory=dict)
    case_count: int = 0

    def to_dict(self) -> dict:
        return {
            "f1_pixel_max": self.f1_pixel_max,
            "threshold_pixel": self.threshold_pixel,
            "f1_region_max": self.f1_region_max,
            "threshold_region": self.threshold_region,
            "per_category": {k: v.to_dict() for k, v in sorted(self.per_category.items())},
            "case_count": self.case_count,
        }

    def format_table(self) -> str:
        """Plain-text summary: one column per category plus the pooled total."""
        cats = sorted(self.per_category)
        headers = ["Metric"] + cats + ["Total"]
        rows = [
            ["F1-pixel"]
            + [f"{self.per_category[c].f1_pixel_max * 100:.2f}" for c in cats]
            + [f"{self.f1_pixel_max * 100:.2f}"],
            ["F1-region"]
            + [f"{self.per_category[c].f1_region_max * 100:.2f}" for c in cats]
            + [f"{self.f1_region_max * 100:.2f}"],
            ["cases"]
            + [str(self.per_category[c].case_count) for c in cats]
            + [str(self.case_count)],
        ]
        widths = [
            max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))
        ]
        def fmt(row):
            return "  ".join(str(cell).rjust(w) for cell, w in zip(row, widths))
        lines = [fmt(headers), fmt(["-" * w for w in widths])]
        lines.extend(fmt(r) for r in rows)
        return "\n".join(lines)


def aggregate(
    predictions: Sequence[AnomalyMap],
    truths: Sequence[BinaryMask],
    categories: Optional[Sequence[str]] = None,
    pixel_mode: str = "auto",
    region_min_overlap: float = 0.6,
    region_overlap_kind: str = OVERLAP_KIND_IOU,
    region_thresholds: int = 50,
) -> MetricsReport:
    """Pooled metrics plus a per-category breakdown.

    Pooled numbers are recomputed from the pooled pixels and regions, not
    averaged over categories, mirroring how a dataset-level total relates to
    its per-category rows.
    """
    if len(predictions) != len(truths):
        raise ValueError("predictions and truths must align")
    report = MetricsReport(case_count=len(predictions))
    if not predictions:
        return report

    report.f1_pixel_max, report.threshold_pixel = max_f1_pixel(
        predictions, truths, mode=pixel_mode
    )
    report.f1_region_max, report.threshold_region = max_f1_region(
        predictions, truths, region_min_overlap, region_overlap_kind, region_thresholds
    )

    if categories is not None:
        if len(categories) != len(predictions):
            raise ValueError("categories must align with predictions")
        for cat in sorted(set(categories)):
            idx = [i for i, c in enumerate(categories) if c == cat]
            preds = [predictions[i] for i in idx]
            gts = [truths[i] for i in idx]
            fp, tp_thr = max_f1_pixel(preds, gts, mode=pixel_mode)
            fr, tr_thr = max_f1_region(
                preds, gts, region_min_overlap, region_overlap_kind, region_thresholds
            )
            report.per_category[cat] = CategoryMetrics(fp, tp_thr, fr, tr_thr, len(idx))
    return report
