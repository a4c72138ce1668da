"""Adapter-side writers for the engine interchange formats.

These deliberately do not import the engine package: the byte layouts and
the manifest schema are the contract between the two sides, so the adapter
carries its own implementation of them.

* tensor files: magic ``SAAT``, version byte 1, dtype byte 1 (little-endian
  float32), ndim byte, ndim little-endian uint32 dims, row-major payload;
* masks: 8-bit single-channel PNG, nonzero = foreground;
* manifests: JSON with keys ``image``, ``regions``, ``object_region``,
  ``features``, ``ground_truth``; relative paths; extra keys allowed.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

MAGIC = b"SAAT"
VERSION = 1
DTYPE_F32 = 1


def write_tensor(values: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.size == 0:
        raise ValueError("refusing to write an empty tensor")
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite values")
    header = MAGIC + struct.pack("<BBB", VERSION, DTYPE_F32, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + dims + arr.tobytes())


def write_mask_png(bits: np.ndarray, path) -> None:
    Image.fromarray(bits.astype(np.uint8) * 255, mode="L").save(Path(path), format="PNG")


def write_image_png(pixels: np.ndarray, path) -> None:
    Image.fromarray(pixels.astype(np.uint8), mode="RGB").save(Path(path), format="PNG")


def write_manifest(
    out_dir,
    regions: list[dict],
    object_region: Optional[dict],
    ground_truth: Optional[str],
    extra: Optional[dict] = None,
    image_name: str = "image.png",
    features_name: str = "features.saat",
) -> Path:
    manifest = {
        "image": image_name,
        "regions": regions,
        "object_region": object_region,
        "features": features_name,
        "ground_truth": ground_truth,
    }
    if extra:
        manifest.update(extra)
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def manifests_match(a, b, score_tol: float = 1e-3) -> tuple[bool, str]:
    """Tolerance comparison of two emitted manifests.

    Byte-identical manifests are expected on one machine; across hardware
    the detector scores may drift, so scores compare within ``score_tol``
    and everything else must be exactly equal.
    """
    ma, mb = read_manifest(a), read_manifest(b)
    ra, rb = ma.pop("regions"), mb.pop("regions")
    if ma != mb:
        return False, "non-region fields differ"
    if len(ra) != len(rb):
        return False, f"region counts differ: {len(ra)} vs {len(rb)}"
    for i, (xa, xb) in enumerate(zip(ra, rb)):
        sa, sb = xa.pop("score"), xb.pop("score")
        if xa != xb:
            return False, f"region {i} differs beyond score"
        if abs(sa - sb) > score_tol:
            return False, f"region {i} score differs by {abs(sa - sb)}"
    return True, "match"
