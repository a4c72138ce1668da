"""Brute-force reference implementations.

These are deliberately naive transliterations of the definitions the engine
implements with vectorized shortcuts. They are permanent residents of the
package, not test scaffolding: oracle agreement on randomized instances is
the primary acceptance mechanism, since the headline benchmark numbers need
full datasets and model checkpoints that are out of reach at desk scale.

Every oracle guards its instance size; they are meant for grids up to 32x32
and at most 64 candidate regions.
"""

from __future__ import annotations

import math
from collections import deque
from typing import Optional, Sequence

import numpy as np

from .core import AnomalyMap, BinaryMask, FeatureMap, RegionCandidate, SaliencyMap

MAX_GRID_POSITIONS = 32 * 32
MAX_CANDIDATES = 64


def _guard_grid(positions: int) -> None:
    if positions > MAX_GRID_POSITIONS:
        raise ValueError(f"oracle instance too large: {positions} grid positions")


def _guard_candidates(count: int) -> None:
    if count > MAX_CANDIDATES:
        raise ValueError(f"oracle instance too large: {count} candidates")


def _bilinear_at(grid: np.ndarray, y: float, x: float) -> float:
    """Sample one point with the half-pixel convention used everywhere."""
    fh, fw = grid.shape
    y = min(max(y, 0.0), fh - 1.0)
    x = min(max(x, 0.0), fw - 1.0)
    y0, x0 = int(math.floor(y)), int(math.floor(x))
    y1, x1 = min(y0 + 1, fh - 1), min(x0 + 1, fw - 1)
    wy, wx = y - y0, x - x0
    top = grid[y0, x0] * (1 - wx) + grid[y0, x1] * wx
    bot = grid[y1, x0] * (1 - wx) + grid[y1, x1] * wx
    return float(top * (1 - wy) + bot * wy)


def oracle_saliency(
    features: FeatureMap, n_neighbors: int, out_width: int, out_height: int
) -> SaliencyMap:
    """Position-by-position neighbor statistic: full distance row, full sort."""
    fh, fw, depth = features.fheight, features.fwidth, features.depth
    positions = fh * fw
    _guard_grid(positions)

    flat = features.values.reshape(positions, depth)
    unit = np.zeros_like(flat)
    for p in range(positions):
        norm = math.sqrt(float(np.dot(flat[p], flat[p])))
        if norm > 0:
            unit[p] = flat[p] / norm

    n_eff = min(n_neighbors, positions - 1)
    grid = np.zeros(positions)
    for p in range(positions):
        dists = 1.0 - unit @ unit[p]
        dists = np.delete(dists, p)
        dists = np.clip(np.sort(dists), 0.0, 2.0)
        grid[p] = float(np.mean(dists[:n_eff]))
    grid = grid.reshape(fh, fw)

    out = np.zeros((out_height, out_width))
    for i in range(out_height):
        sy = (i + 0.5) * fh / out_height - 0.5
        for j in range(out_width):
            sx = (j + 0.5) * fw / out_width - 0.5
            out[i, j] = _bilinear_at(grid, sy, sx)
    return SaliencyMap(np.clip(out, 0.0, 2.0))


def oracle_saliency_prompt(region: RegionCandidate, smap: SaliencyMap) -> float:
    """Pixelwise sum of the masked saliency, then the exponential."""
    bits = region.mask.bits.tolist()
    vals = smap.values.tolist()
    total = 0.0
    count = 0
    for i, row in enumerate(bits):
        for j, flag in enumerate(row):
            if flag:
                total += vals[i][j]
                count += 1
    if count == 0:
        raise ValueError("empty region mask")
    return math.exp(total / count)


def _box_iou(a, b) -> float:
    ix0 = max(a.x0, b.x0)
    iy0 = max(a.y0, b.y0)
    ix1 = min(a.x1, b.x1)
    iy1 = min(a.y1, b.y1)
    iw = ix1 - ix0
    ih = iy1 - iy0
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (a.x1 - a.x0) * (a.y1 - a.y0)
    area_b = (b.x1 - b.x0) * (b.y1 - b.y0)
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def oracle_dedupe(
    runs: Sequence[Sequence[RegionCandidate]], dedupe_iou: float
) -> list[RegionCandidate]:
    """Greedy suppression in score order, ties by (run, position)."""
    tagged = []
    for run_idx, run in enumerate(runs):
        for pos_idx, cand in enumerate(run):
            tagged.append((cand.score, run_idx, pos_idx, cand))
    _guard_candidates(len(tagged))
    tagged.sort(key=lambda t: (-t[0], t[1], t[2]))
    kept: list[RegionCandidate] = []
    for _, _, _, cand in tagged:
        if all(_box_iou(cand.box, other.box) <= dedupe_iou for other in kept):
            kept.append(cand)
    return kept


def oracle_topk(candidates: Sequence[RegionCandidate], k: int) -> list[RegionCandidate]:
    """Selection by repeated scan for the current maximum."""
    _guard_candidates(len(candidates))
    remaining = list(range(len(candidates)))
    picked: list[int] = []
    while remaining and len(picked) < k:
        best = remaining[0]
        for idx in remaining[1:]:
            if candidates[idx].calibrated_score > candidates[best].calibrated_score:
                best = idx
        picked.append(best)
        remaining.remove(best)
    return [candidates[i] for i in picked]


def oracle_fuse(
    selected: Sequence[RegionCandidate], width: int, height: int
) -> AnomalyMap:
    """Per-pixel mean of covering scores, written out longhand."""
    _guard_candidates(len(selected))
    _guard_grid(width * height)
    num = [[0.0] * width for _ in range(height)]
    cov = [[0] * width for _ in range(height)]
    for cand in selected:
        bits = cand.mask.bits.tolist()
        score = cand.calibrated_score
        for i in range(height):
            row = bits[i]
            for j in range(width):
                if row[j]:
                    num[i][j] += score
                    cov[i][j] += 1
    out = np.zeros((height, width))
    for i in range(height):
        for j in range(width):
            if cov[i][j] > 0:
                out[i, j] = num[i][j] / cov[i][j]
    return AnomalyMap(out)


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else 0.0


def oracle_f1_sweep(
    predictions: Sequence[AnomalyMap], truths: Sequence[BinaryMask]
) -> tuple[float, float]:
    """Exhaustive pixel-F1 sweep over every usable distinct value.

    Operating points binarize as ``value >= t`` for each distinct pooled
    value except the global minimum (keeping it would make an all-positive
    prediction available, which an all-zero map must never produce). Ties
    resolve to the largest threshold.
    """
    if len(predictions) != len(truths) or not predictions:
        raise ValueError("need equally many, and at least one, prediction/truth pair")
    values = np.concatenate([p.values.ravel() for p in predictions])
    labels = np.concatenate([t.bits.ravel() for t in truths])
    _guard_grid(values.size // max(len(predictions), 1))

    distinct = sorted(set(values.tolist()))
    best_f1, best_t = 0.0, 0.0
    for t in distinct[1:]:
        pos = values >= t
        tp = int(np.sum(pos & labels))
        fp = int(np.sum(pos & ~labels))
        fn = int(np.sum(~pos & labels))
        f1 = _f1_from_counts(tp, fp, fn)
        if f1 >= best_f1:
            best_f1, best_t = f1, t
    return best_f1, best_t


def oracle_connected_components(mask: BinaryMask) -> list[BinaryMask]:
    """Flood-fill decomposition, 8-connectivity, raster order."""
    bits = mask.bits
    h, w = bits.shape
    seen = np.zeros((h, w), dtype=bool)
    components = []
    for si in range(h):
        for sj in range(w):
            if not bits[si, sj] or seen[si, sj]:
                continue
            comp = np.zeros((h, w), dtype=bool)
            queue = deque([(si, sj)])
            seen[si, sj] = True
            while queue:
                i, j = queue.popleft()
                comp[i, j] = True
                for di in (-1, 0, 1):
                    for dj in (-1, 0, 1):
                        ni, nj = i + di, j + dj
                        if 0 <= ni < h and 0 <= nj < w and bits[ni, nj] and not seen[ni, nj]:
                            seen[ni, nj] = True
                            queue.append((ni, nj))
            components.append(BinaryMask(comp))
    return components


def oracle_max_matching(
    overlaps: np.ndarray, min_overlap: float = 0.6
) -> int:
    """Largest one-to-one match count among pairs strictly above the cutoff."""
    n_pred, n_gt = overlaps.shape
    edges = [
        (i, j) for i in range(n_pred) for j in range(n_gt) if overlaps[i, j] > min_overlap
    ]

    def recurse(idx: int, used_pred: set, used_gt: set) -> int:
        if idx == len(edges):
            return 0
        best = recurse(idx + 1, used_pred, used_gt)
        i, j = edges[idx]
        if i not in used_pred and j not in used_gt:
            used_pred.add(i)
            used_gt.add(j)
            best = max(best, 1 + recurse(idx + 1, used_pred, used_gt))
            used_pred.remove(i)
            used_gt.remove(j)
        return best

    return recurse(0, set(), set())
