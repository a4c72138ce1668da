"""Dataset layout walkers for the two common inspection-benchmark shapes."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

log = logging.getLogger("promptseg_adapters")

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}

LAYOUT_MVTEC = "mvtec-like"
LAYOUT_VISA = "visa-like"
LAYOUTS = (LAYOUT_MVTEC, LAYOUT_VISA)


@dataclass(frozen=True)
class Sample:
    image_path: Path
    gt_path: Optional[Path]  # None for good/normal images
    category: str
    defect_type: str
    case_id: str

    @property
    def is_anomalous(self) -> bool:
        return self.defect_type not in ("good", "normal")


def _is_image(path: Path) -> bool:
    return path.suffix.lower() in IMAGE_SUFFIXES


def _walk_mvtec(root: Path) -> tuple[list[Sample], list[str]]:
    """<category>/test/<defect>/NNN.png with masks under ground_truth/."""
    samples: list[Sample] = []
    skipped: list[str] = []
    for category_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        test_dir = category_dir / "test"
        if not test_dir.is_dir():
            continue
        category = category_dir.name
        for defect_dir in sorted(p for p in test_dir.iterdir() if p.is_dir()):
            defect = defect_dir.name
            for image_path in sorted(p for p in defect_dir.iterdir() if _is_image(p)):
                case_id = f"{category}_{defect}_{image_path.stem}"
                if defect == "good":
                    samples.append(Sample(image_path, None, category, defect, case_id))
                    continue
                gt_dir = category_dir / "ground_truth" / defect
                gt = _find_gt(gt_dir, image_path.stem)
                if gt is None:
                    log.warning("no ground truth for %s; skipping", image_path)
                    skipped.append(str(image_path))
                    continue
                samples.append(Sample(image_path, gt, category, defect, case_id))
    return samples, skipped


def _find_gt(gt_dir: Path, stem: str) -> Optional[Path]:
    if not gt_dir.is_dir():
        return None
    for candidate in (f"{stem}_mask.png", f"{stem}.png"):
        path = gt_dir / candidate
        if path.exists():
            return path
    matches = sorted(gt_dir.glob(f"{stem}*"))
    return matches[0] if matches else None


def _walk_visa(root: Path) -> tuple[list[Sample], list[str]]:
    """<category>/Data/Images/{Normal,Anomaly}/ with Masks/Anomaly/."""
    samples: list[Sample] = []
    skipped: list[str] = []
    for category_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        images_dir = category_dir / "Data" / "Images"
        if not images_dir.is_dir():
            continue
        category = category_dir.name
        normal_dir = images_dir / "Normal"
        if normal_dir.is_dir():
            for image_path in sorted(p for p in normal_dir.iterdir() if _is_image(p)):
                case_id = f"{category}_normal_{image_path.stem}"
                samples.append(Sample(image_path, None, category, "normal", case_id))
        anomaly_dir = images_dir / "Anomaly"
        if anomaly_dir.is_dir():
            mask_dir = category_dir / "Data" / "Masks" / "Anomaly"
            for image_path in sorted(p for p in anomaly_dir.iterdir() if _is_image(p)):
                case_id = f"{category}_anomaly_{image_path.stem}"
                gt = _find_gt(mask_dir, image_path.stem)
                if gt is None:
                    log.warning("no ground truth for %s; skipping", image_path)
                    skipped.append(str(image_path))
                    continue
                samples.append(Sample(image_path, gt, category, "anomaly", case_id))
    return samples, skipped


def discover_samples(root, layout: str) -> tuple[list[Sample], list[str]]:
    """All test samples under ``root`` plus the list of skipped images."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root does not exist: {root}")
    if layout == LAYOUT_MVTEC:
        return _walk_mvtec(root)
    if layout == LAYOUT_VISA:
        return _walk_visa(root)
    raise ValueError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
