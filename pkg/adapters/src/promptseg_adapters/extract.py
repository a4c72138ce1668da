"""Extraction: one inspection image in, one interchange case bundle out."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .config import AdapterConfig
from .formats import write_image_png, write_manifest, write_mask_png, write_tensor

log = logging.getLogger("promptseg_adapters")


@dataclass
class CaseResult:
    manifest: Optional[Path]
    region_count: int = 0
    per_prompt_counts: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


def extract_regions(image: np.ndarray, prompts: list[str], detector,
                    box_threshold: float) -> tuple[list[dict], dict]:
    """One detector pass per prompt; fragments match the manifest schema."""
    if not prompts:
        raise ValueError("prompt list is empty")
    regions: list[dict] = []
    per_prompt = {}
    h, w = image.shape[:2]
    for phrase in prompts:
        hits = detector.detect(image, phrase)
        kept = 0
        for (x0, y0, x1, y1), score in hits:
            if score < box_threshold:
                continue
            box = [
                float(np.clip(x0, 0, w)), float(np.clip(y0, 0, h)),
                float(np.clip(x1, 0, w)), float(np.clip(y1, 0, h)),
            ]
            regions.append({
                "box": box,
                "score": float(np.clip(score, 0.0, 1.0)),
                "phrase": phrase,
                "mask": None,
            })
            kept += 1
        per_prompt[phrase] = kept
    return regions, per_prompt


def refine_masks(image: np.ndarray, boxes: list, refiner) -> tuple[list, list]:
    """One mask (or None) per box plus the recorded per-box failures."""
    masks = refiner.refine(image, [tuple(b) for b in boxes])
    failures = []
    for i, mask in enumerate(masks):
        if mask is None:
            failures.append(f"box {i}: refiner produced no mask")
        elif mask.shape != image.shape[:2]:
            failures.append(f"box {i}: mask shape {mask.shape} != image")
            masks[i] = None
    return masks, failures


def extract_features(image: np.ndarray, extractor) -> np.ndarray:
    fmap = extractor.extract(image)
    if fmap.ndim != 3 or fmap.shape[0] * fmap.shape[1] < 2:
        raise ValueError(f"extractor returned bad feature shape {fmap.shape}")
    return fmap


def _load_resized(path, size: int) -> np.ndarray:
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((size, size), Image.BILINEAR)
    return np.asarray(rgb)


def _load_resized_mask(path, size: int) -> np.ndarray:
    with Image.open(path) as img:
        gray = img.convert("L").resize((size, size), Image.NEAREST)
    return np.asarray(gray) != 0


def build_case(
    image_path,
    gt_path,
    category: str,
    out_dir,
    config: AdapterConfig,
    detector,
    refiner,
    extractor,
) -> CaseResult:
    """Run the three extractors on one image and write its case directory.

    Regions whose refinement failed keep a null mask entry: the engine then
    rasterizes the box, which is the documented fallback. Degenerate boxes
    are dropped entirely. Good images (no ground-truth path) get an
    all-zero ground-truth mask.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    size = config.input_size
    result = CaseResult(manifest=None)

    image = _load_resized(image_path, size)
    write_image_png(image, out / "image.png")

    prompts = config.prompts.for_category(category)
    regions, per_prompt = extract_regions(image, prompts, detector, config.box_threshold)
    result.per_prompt_counts = per_prompt

    kept_regions = []
    for region in regions:
        x0, y0, x1, y1 = region["box"]
        if x1 - x0 < 1.0 or y1 - y0 < 1.0:
            result.failures.append(f"degenerate box dropped: {region['box']}")
            continue
        kept_regions.append(region)

    masks, failures = refine_masks(image, [r["box"] for r in kept_regions], refiner)
    result.failures.extend(failures)
    for i, (region, mask) in enumerate(zip(kept_regions, masks)):
        if mask is None:
            continue  # engine falls back to rasterizing the box
        name = f"region_{i:03d}.png"
        write_mask_png(mask, out / name)
        region["mask"] = name

    object_entry = None
    hit = detector.detect_object(image, config.prompts.object_prompt(category))
    if hit is not None:
        (x0, y0, x1, y1), _ = hit
        obj_box = [float(np.clip(x0, 0, size)), float(np.clip(y0, 0, size)),
                   float(np.clip(x1, 0, size)), float(np.clip(y1, 0, size))]
        obj_masks, _ = refine_masks(image, [obj_box], refiner)
        object_entry = {"box": obj_box, "mask": None}
        if obj_masks[0] is not None:
            write_mask_png(obj_masks[0], out / "object_mask.png")
            object_entry["mask"] = "object_mask.png"

    fmap = extract_features(image, extractor)
    write_tensor(fmap, out / "features.saat")

    if gt_path is not None:
        gt = _load_resized_mask(gt_path, size)
    else:
        gt = np.zeros((size, size), dtype=bool)
    write_mask_png(gt, out / "ground_truth.png")

    result.manifest = write_manifest(
        out,
        regions=kept_regions,
        object_region=object_entry,
        ground_truth="ground_truth.png",
        extra={
            "category": category,
            "backbone_layer": extractor.layer_name,
            "source_image": str(image_path),
        },
    )
    result.region_count = len(kept_regions)
    return result
