from pathlib import Path

import numpy as np
import pytest
from PIL import Image

BG_LEVEL = 110
OBJECT_LEVEL = 140
BLOB_LEVEL = 30


def render_inspection_image(size=96, blob=None):
    """Gray background, brighter centered object square, optional dark blob.

    ``blob`` is (row, col, height, width) in pixels, inside the object.
    """
    pixels = np.full((size, size, 3), BG_LEVEL, dtype=np.uint8)
    margin = size // 6
    pixels[margin:size - margin, margin:size - margin] = OBJECT_LEVEL
    mask = np.zeros((size, size), dtype=bool)
    if blob is not None:
        r, c, h, w = blob
        pixels[r:r + h, c:c + w] = BLOB_LEVEL
        mask[r:r + h, c:c + w] = True
    return pixels, mask


def make_mvtec_tree(root: Path, categories, n_anomalous=3, n_good=2, size=96,
                    drop_gt_for=()):
    """A miniature dataset in the category/test/defect layout."""
    for ci, category in enumerate(categories):
        test_dir = root / category / "test"
        gt_dir = root / category / "ground_truth"
        for i in range(n_anomalous):
            rng = np.random.default_rng(1000 * ci + i)
            r = int(rng.integers(size // 4, size // 2))
            c = int(rng.integers(size // 4, size // 2))
            h = int(rng.integers(8, 14))
            w = int(rng.integers(8, 14))
            pixels, mask = render_inspection_image(size, (r, c, h, w))
            img_dir = test_dir / "broken"
            img_dir.mkdir(parents=True, exist_ok=True)
            Image.fromarray(pixels).save(img_dir / f"{i:03d}.png")
            if (category, i) not in drop_gt_for:
                mdir = gt_dir / "broken"
                mdir.mkdir(parents=True, exist_ok=True)
                Image.fromarray(mask.astype(np.uint8) * 255).save(
                    mdir / f"{i:03d}_mask.png"
                )
        for i in range(n_good):
            pixels, _ = render_inspection_image(size, None)
            img_dir = test_dir / "good"
            img_dir.mkdir(parents=True, exist_ok=True)
            Image.fromarray(pixels).save(img_dir / f"{i:03d}.png")
    return root


def make_visa_tree(root: Path, categories, n_anomalous=2, n_normal=1, size=96):
    for ci, category in enumerate(categories):
        images = root / category / "Data" / "Images"
        masks = root / category / "Data" / "Masks" / "Anomaly"
        (images / "Anomaly").mkdir(parents=True, exist_ok=True)
        (images / "Normal").mkdir(parents=True, exist_ok=True)
        masks.mkdir(parents=True, exist_ok=True)
        for i in range(n_anomalous):
            rng = np.random.default_rng(2000 * ci + i)
            r = int(rng.integers(size // 4, size // 2))
            c = int(rng.integers(size // 4, size // 2))
            pixels, mask = render_inspection_image(size, (r, c, 10, 10))
            Image.fromarray(pixels).save(images / "Anomaly" / f"{i:03d}.jpg")
            Image.fromarray(mask.astype(np.uint8) * 255).save(masks / f"{i:03d}.png")
        for i in range(n_normal):
            pixels, _ = render_inspection_image(size, None)
            Image.fromarray(pixels).save(images / "Normal" / f"{i:03d}.jpg")
    return root


@pytest.fixture
def mvtec_root(tmp_path):
    return make_mvtec_tree(tmp_path / "mvtec", ["widget", "gasket"])


@pytest.fixture
def visa_root(tmp_path):
    return make_visa_tree(tmp_path / "visa", ["candle"])
