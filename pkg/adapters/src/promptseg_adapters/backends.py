"""Detector, refiner and feature-extractor backends.

Three pluggable roles mirror the upstream model stack:

* a region detector turns one language phrase into scored boxes;
* a mask refiner turns boxes into image-sized masks;
* a feature extractor produces the dense grid the engine's saliency needs.

The ``offline`` backends are deterministic image-processing stand-ins used
for tests and for running the full export path without checkpoints. The
real backends wrap the open-vocabulary detector, the promptable segmenter
and a torchvision backbone; the first two need their packages and
checkpoints installed and fail with a clear message otherwise.
"""

from __future__ import annotations

from collections import deque
from typing import Optional, Protocol

import numpy as np

Box = tuple[float, float, float, float]


class RegionDetector(Protocol):
    def detect(self, image: np.ndarray, phrase: str) -> list[tuple[Box, float]]:
        """Scored boxes for one phrase on an RGB uint8 image."""

    def detect_object(self, image: np.ndarray,
                      phrase: str = "object") -> Optional[tuple[Box, float]]:
        """The inspected object queried with the object prompt, if found."""


class MaskRefiner(Protocol):
    def refine(self, image: np.ndarray, boxes: list[Box]) -> list[Optional[np.ndarray]]:
        """One image-sized bool mask per box; None marks a failed box."""


class FeatureExtractor(Protocol):
    layer_name: str

    def extract(self, image: np.ndarray) -> np.ndarray:
        """(fheight, fwidth, depth) float32 feature grid."""


def _gray(image: np.ndarray) -> np.ndarray:
    return image.astype(np.float64).mean(axis=2)


def _label_components(bits: np.ndarray) -> list[np.ndarray]:
    """8-connected components by BFS, raster order; adapter-local helper."""
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
            components.append(comp)
    return components


def _component_box(comp: np.ndarray) -> Box:
    rows, cols = np.nonzero(comp)
    return (float(cols.min()), float(rows.min()),
            float(cols.max() + 1), float(rows.max() + 1))


class ContrastBlobDetector:
    """Offline detector: contrast outliers against the image median.

    Phrases steer polarity the way state expressions would: phrases naming
    dark states ("hole", "black", "crack") return dark regions, bright
    states ("bubble", "white", "spot") return bright ones, anything else
    returns both. The object phrase is handled by ``detect_object``.
    """

    DARK_WORDS = ("hole", "black", "dark", "crack")
    BRIGHT_WORDS = ("bubble", "white", "bright", "spot")

    def __init__(self, sigma: float = 2.5, min_area: int = 4):
        self.sigma = sigma
        self.min_area = min_area

    def _regions(self, gray: np.ndarray, polarity: str) -> list[tuple[Box, float]]:
        med = float(np.median(gray))
        spread = max(float(gray.std()), 1e-6)
        if polarity == "dark":
            outliers = gray < med - self.sigma * spread
        else:
            outliers = gray > med + self.sigma * spread
        found = []
        for comp in _label_components(outliers):
            area = int(comp.sum())
            if area < self.min_area:
                continue
            contrast = float(np.abs(gray[comp] - med).mean()) / (spread * 6.0)
            score = float(np.clip(0.3 + 0.6 * contrast, 0.05, 0.99))
            found.append((_component_box(comp), score))
        return found

    def detect(self, image: np.ndarray, phrase: str) -> list[tuple[Box, float]]:
        gray = _gray(image)
        lowered = phrase.lower()
        out = []
        if any(w in lowered for w in self.DARK_WORDS):
            out = self._regions(gray, "dark")
        elif any(w in lowered for w in self.BRIGHT_WORDS):
            out = self._regions(gray, "bright")
        else:
            out = self._regions(gray, "dark") + self._regions(gray, "bright")
        return out

    def detect_object(self, image: np.ndarray,
                      phrase: str = "object") -> Optional[tuple[Box, float]]:
        """The inspected object: the largest region distinct from the border.

        The phrase is accepted for interface parity with the grounded
        detector but carries no information this heuristic can use.
        """
        del phrase
        gray = _gray(image)
        border = np.concatenate([gray[0], gray[-1], gray[:, 0], gray[:, -1]])
        level = float(np.median(border))
        spread = max(float(gray.std()), 1e-6)
        fg = np.abs(gray - level) > 0.75 * spread
        comps = _label_components(fg)
        if not comps:
            return None
        best = max(comps, key=lambda c: int(c.sum()))
        if int(best.sum()) < 16:
            return None
        return _component_box(best), 0.95


class BoxFillRefiner:
    """Offline refiner: the mask is the box rectangle itself.

    Degenerate boxes (no pixel center inside) are reported as failures so
    the exporter can fall back to leaving the mask null.
    """

    def refine(self, image: np.ndarray, boxes: list[Box]) -> list[Optional[np.ndarray]]:
        h, w = image.shape[:2]
        out: list[Optional[np.ndarray]] = []
        for x0, y0, x1, y1 in boxes:
            cols = (np.arange(w) >= x0) & (np.arange(w) < x1)
            rows = (np.arange(h) >= y0) & (np.arange(h) < y1)
            mask = np.outer(rows, cols)
            out.append(mask if mask.any() else None)
        return out


class GridStatsExtractor:
    """Offline extractor: per-cell intensity statistics on a fixed grid.

    Produces an (grid, grid, 10) map: mean/std/min/max of gray, per-channel
    means, and mean absolute gradients. Nearly constant images give nearly
    constant features, so downstream saliency sits near zero.
    """

    def __init__(self, grid: int = 50):
        self.grid = grid
        self.layer_name = f"gridstats{grid}"

    def extract(self, image: np.ndarray) -> np.ndarray:
        h, w = image.shape[:2]
        gray = _gray(image)
        gy, gx = np.gradient(gray)
        rgb = image.astype(np.float64)
        cells = np.zeros((self.grid, self.grid, 10), dtype=np.float64)
        ys = np.linspace(0, h, self.grid + 1).astype(int)
        xs = np.linspace(0, w, self.grid + 1).astype(int)
        for i in range(self.grid):
            for j in range(self.grid):
                y0, y1 = ys[i], max(ys[i + 1], ys[i] + 1)
                x0, x1 = xs[j], max(xs[j + 1], xs[j] + 1)
                patch = gray[y0:y1, x0:x1]
                cells[i, j, 0] = patch.mean()
                cells[i, j, 1] = patch.std()
                cells[i, j, 2] = patch.min()
                cells[i, j, 3] = patch.max()
                cells[i, j, 4:7] = rgb[y0:y1, x0:x1].reshape(-1, 3).mean(axis=0)
                cells[i, j, 7] = np.abs(gy[y0:y1, x0:x1]).mean()
                cells[i, j, 8] = np.abs(gx[y0:y1, x0:x1]).mean()
                cells[i, j, 9] = 1.0  # keeps vectors away from the zero vector
        return cells.astype(np.float32)


class WideResNetExtractor:
    """Torchvision wide_resnet50_2 intermediate features.

    ``layer`` picks the residual stage; the default second stage yields a
    stride-8 grid. With no checkpoint the backbone is randomly initialized
    under a fixed seed, which keeps smoke runs deterministic; pass a
    checkpoint path for meaningful features.
    """

    _STRIDES = {"layer1": 4, "layer2": 8, "layer3": 16, "layer4": 32}

    def __init__(self, checkpoint: Optional[str] = None, layer: str = "layer2",
                 device: str = "cpu", seed: int = 0):
        if layer not in self._STRIDES:
            raise ValueError(f"unknown layer {layer!r}")
        import torch
        from torchvision.models import wide_resnet50_2

        torch.manual_seed(seed)
        self._torch = torch
        self.layer_name = layer
        self.device = device
        self.model = wide_resnet50_2(weights=None)
        if checkpoint is not None:
            state = torch.load(checkpoint, map_location="cpu", weights_only=True)
            self.model.load_state_dict(state)
        self.model.to(device).eval()
        self._mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1).to(device)
        self._std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1).to(device)

    def extract(self, image: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            x = torch.from_numpy(image.astype(np.float32) / 255.0)
            x = x.permute(2, 0, 1).unsqueeze(0).to(self.device)
            x = (x - self._mean) / self._std
            x = self.model.conv1(x)
            x = self.model.bn1(x)
            x = self.model.relu(x)
            x = self.model.maxpool(x)
            for name in ("layer1", "layer2", "layer3", "layer4"):
                x = getattr(self.model, name)(x)
                if name == self.layer_name:
                    break
            return x.squeeze(0).permute(1, 2, 0).cpu().numpy().astype(np.float32)


class GroundingDetector:
    """Open-vocabulary grounding detector (real backend)."""

    def __init__(self, checkpoint: str, config_path: str, device: str = "cpu",
                 box_threshold: float = 0.05):
        try:
            from groundingdino.util.inference import Model  # type: ignore
        except ImportError as exc:
            raise RuntimeError(
                "the grounding detector package is not installed; install it and"
                " provide --detector-checkpoint/--detector-config, or use"
                " --backend offline"
            ) from exc
        self._model = Model(
            model_config_path=config_path,
            model_checkpoint_path=checkpoint,
            device=device,
        )
        self.box_threshold = box_threshold

    def detect(self, image: np.ndarray, phrase: str) -> list[tuple[Box, float]]:
        detections = self._model.predict_with_classes(
            image=image[:, :, ::-1],  # the model wants BGR
            classes=[phrase],
            box_threshold=self.box_threshold,
            text_threshold=self.box_threshold,
        )
        out = []
        for box, conf in zip(detections.xyxy, detections.confidence):
            out.append(((float(box[0]), float(box[1]), float(box[2]), float(box[3])),
                        float(np.clip(conf, 0.0, 1.0))))
        return out

    def detect_object(self, image: np.ndarray,
                      phrase: str = "object") -> Optional[tuple[Box, float]]:
        hits = self.detect(image, phrase)
        if not hits:
            return None
        return max(hits, key=lambda t: (t[0][2] - t[0][0]) * (t[0][3] - t[0][1]))


class PromptedSegmenter:
    """Box-prompted segmentation model (real backend)."""

    def __init__(self, checkpoint: str, model_type: str = "vit_h", device: str = "cpu"):
        try:
            from segment_anything import SamPredictor, sam_model_registry  # type: ignore
        except ImportError as exc:
            raise RuntimeError(
                "the promptable segmenter package is not installed; install it"
                " and provide --segmenter-checkpoint, or use --backend offline"
            ) from exc
        sam = sam_model_registry[model_type](checkpoint=checkpoint)
        sam.to(device)
        self._predictor = SamPredictor(sam)

    def refine(self, image: np.ndarray, boxes: list[Box]) -> list[Optional[np.ndarray]]:
        self._predictor.set_image(image)
        out: list[Optional[np.ndarray]] = []
        for box in boxes:
            if box[2] - box[0] <= 0 or box[3] - box[1] <= 0:
                out.append(None)
                continue
            masks, _, _ = self._predictor.predict(
                box=np.asarray(box, dtype=np.float32), multimask_output=False
            )
            mask = masks[0].astype(bool)
            out.append(mask if mask.any() else None)
        return out


def build_backends(config, kind: str):
    """(detector, refiner, extractor) for the requested backend family."""
    if kind == "offline":
        return (
            ContrastBlobDetector(),
            BoxFillRefiner(),
            GridStatsExtractor(grid=max(2, config.input_size // 8)),
        )
    if kind == "real":
        if config.detector_checkpoint is None or config.detector_config is None:
            raise ValueError("real backend needs detector checkpoint and config paths")
        if config.segmenter_checkpoint is None:
            raise ValueError("real backend needs a segmenter checkpoint path")
        detector = GroundingDetector(
            config.detector_checkpoint,
            config.detector_config,
            device=config.device,
            box_threshold=config.box_threshold,
        )
        refiner = PromptedSegmenter(config.segmenter_checkpoint, device=config.device)
        extractor = WideResNetExtractor(
            checkpoint=config.backbone_checkpoint,
            layer=config.backbone_layer,
            device=config.device,
        )
        return detector, refiner, extractor
    raise ValueError(f"unknown backend kind {kind!r}")
