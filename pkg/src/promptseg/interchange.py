"""Serialization crossing the model/engine boundary.

Three formats, all bit-exact on round trip:

* tensor files: ``SAAT`` magic, version byte, dtype byte (1 = little-endian
  float32), ndim byte, ndim little-endian uint32 dims, row-major payload;
* masks: 8-bit single-channel PNG, nonzero = foreground;
* case manifests: JSON with keys ``image``, ``regions``, ``object_region``,
  ``features``, ``ground_truth``. Paths are relative to the manifest file.
  Unknown keys are ignored so producers can attach extra metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from .core import (
    AnomalyMap,
    BBox,
    BinaryMask,
    CaseBundle,
    FeatureMap,
    ImageRef,
    RegionCandidate,
    box_to_mask,
)

MAGIC = b"SAAT"
VERSION = 1
DTYPE_F32 = 1

_OFF_MAGIC = 0
_OFF_VERSION = 4
_OFF_DTYPE = 5
_OFF_NDIM = 6
_OFF_DIMS = 7

PathLike = Union[str, Path]


class TensorFormatError(ValueError):
    """Malformed tensor file; ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TensorDataError(ValueError):
    """Structurally valid tensor with an invalid value at ``index``."""

    def __init__(self, message: str, index: tuple):
        super().__init__(f"{message} (at index {index})")
        self.index = index


class ManifestError(ValueError):
    """A case manifest that cannot be hydrated into a valid bundle."""


def write_array(values: np.ndarray, path: PathLike) -> None:
    """Write an array as a tensor file (values stored as float32)."""
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.size == 0:
        raise ValueError("refusing to write an empty tensor")
    header = MAGIC + struct.pack("<BBB", VERSION, DTYPE_F32, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + dims + arr.tobytes())


def read_array(path: PathLike) -> np.ndarray:
    """Read a tensor file back into a float32 array, validating the header."""
    raw = Path(path).read_bytes()
    if len(raw) < _OFF_DIMS:
        raise TensorFormatError(f"file too short ({len(raw)} bytes)", len(raw))
    if raw[:4] != MAGIC:
        raise TensorFormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", _OFF_MAGIC)
    if raw[_OFF_VERSION] != VERSION:
        raise TensorFormatError(f"unsupported version {raw[_OFF_VERSION]}", _OFF_VERSION)
    if raw[_OFF_DTYPE] != DTYPE_F32:
        raise TensorFormatError(f"unsupported dtype code {raw[_OFF_DTYPE]}", _OFF_DTYPE)
    ndim = raw[_OFF_NDIM]
    if ndim == 0:
        raise TensorFormatError("ndim must be positive", _OFF_NDIM)
    payload_off = _OFF_DIMS + 4 * ndim
    if len(raw) < payload_off:
        raise TensorFormatError("truncated dims block", len(raw))
    dims = struct.unpack(f"<{ndim}I", raw[_OFF_DIMS:payload_off])
    count = int(np.prod(dims, dtype=np.int64))
    if count <= 0:
        raise TensorFormatError(f"invalid dims {dims}", _OFF_DIMS)
    expected = payload_off + 4 * count
    if len(raw) != expected:
        raise TensorFormatError(
            f"payload length {len(raw) - payload_off} does not match dims {dims}"
            f" (expected {4 * count} bytes)",
            min(len(raw), expected),
        )
    arr = np.frombuffer(raw, dtype="<f4", count=count, offset=payload_off).reshape(dims)
    finite = np.isfinite(arr)
    if not finite.all():
        idx = np.unravel_index(int(np.argmin(finite)), dims)
        raise TensorDataError("non-finite value in tensor payload", tuple(int(i) for i in idx))
    return arr


def inspect_tensor(path: PathLike) -> dict:
    """Parse just the header; used by the CLI's inspect command."""
    raw = Path(path).read_bytes()
    if len(raw) < _OFF_DIMS or raw[:4] != MAGIC:
        raise TensorFormatError("not a tensor file", 0)
    ndim = raw[_OFF_NDIM]
    dims = struct.unpack(f"<{ndim}I", raw[_OFF_DIMS:_OFF_DIMS + 4 * ndim])
    return {
        "magic": raw[:4].decode("ascii"),
        "version": raw[_OFF_VERSION],
        "dtype": "float32-le" if raw[_OFF_DTYPE] == DTYPE_F32 else f"code {raw[_OFF_DTYPE]}",
        "ndim": ndim,
        "dims": list(dims),
        "payload_bytes": len(raw) - _OFF_DIMS - 4 * ndim,
    }


def write_tensor(fmap: FeatureMap, path: PathLike) -> None:
    """Persist a feature map as a 3-D tensor file."""
    write_array(fmap.values, path)


def read_tensor(path: PathLike) -> FeatureMap:
    """Load a feature map; dims are (fheight, fwidth, depth)."""
    arr = read_array(path)
    if arr.ndim != 3:
        raise TensorFormatError(f"feature tensor must be 3-D, got {arr.ndim}-D", _OFF_NDIM)
    return FeatureMap(arr.astype(np.float64))


def write_anomaly_map(amap: AnomalyMap, path: PathLike) -> None:
    """Persist an anomaly map as a 2-D tensor file with dims (height, width)."""
    write_array(amap.values, path)


def read_anomaly_map(path: PathLike) -> AnomalyMap:
    arr = read_array(path)
    if arr.ndim != 2:
        raise TensorFormatError(f"anomaly map must be 2-D, got {arr.ndim}-D", _OFF_NDIM)
    return AnomalyMap(arr.astype(np.float64))


def save_mask_png(mask: BinaryMask, path: PathLike) -> None:
    img = Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L")
    img.save(Path(path), format="PNG")


def load_mask_png(path: PathLike) -> BinaryMask:
    with Image.open(Path(path)) as img:
        arr = np.asarray(img.convert("L"))
    return BinaryMask(arr != 0)


def save_image(image: ImageRef, path: PathLike) -> None:
    Image.fromarray(image.pixel_data, mode="RGB").save(Path(path), format="PNG")


def load_image(path: PathLike) -> ImageRef:
    with Image.open(Path(path)) as img:
        arr = np.asarray(img.convert("RGB"))
    return ImageRef(width=arr.shape[1], height=arr.shape[0], pixel_data=arr, source_path=str(path))


def _region_to_manifest(region: RegionCandidate, mask_path: Optional[str]) -> dict:
    entry: dict = {"box": region.box.as_list(), "mask": mask_path}
    return entry


def write_case(
    bundle: CaseBundle,
    out_dir: PathLike,
    category: Optional[str] = None,
) -> Path:
    """Materialize a bundle as a manifest directory; returns the manifest path.

    Output is deterministic: fixed file names, sorted JSON keys, and a
    trailing newline, so identical bundles produce byte-identical trees.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    save_image(bundle.image, out / "image.png")
    regions = []
    for i, cand in enumerate(bundle.candidates):
        mask_name = f"region_{i:03d}.png"
        save_mask_png(cand.mask, out / mask_name)
        regions.append({
            "box": cand.box.as_list(),
            "score": cand.score,
            "phrase": cand.phrase,
            "mask": mask_name,
        })

    object_entry = None
    if bundle.object_region is not None:
        save_mask_png(bundle.object_region.mask, out / "object_mask.png")
        object_entry = {"box": bundle.object_region.box.as_list(), "mask": "object_mask.png"}

    write_tensor(bundle.features, out / "features.saat")

    gt_entry = None
    if bundle.ground_truth is not None:
        save_mask_png(bundle.ground_truth, out / "ground_truth.png")
        gt_entry = "ground_truth.png"

    manifest = {
        "image": "image.png",
        "regions": regions,
        "object_region": object_entry,
        "features": "features.saat",
        "ground_truth": gt_entry,
    }
    if category is not None:
        manifest["category"] = category

    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _load_region(
    entry: dict,
    index_label: str,
    base: Path,
    width: int,
    height: int,
    default_phrase: str = "",
) -> RegionCandidate:
    try:
        box = BBox(*[float(v) for v in entry["box"]]).clip(width, height)
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"{index_label}: invalid box: {exc}") from exc

    score = float(entry.get("score", 1.0))
    if not (0.0 <= score <= 1.0):
        raise ManifestError(f"{index_label}: score {score} outside [0, 1]")

    mask_rel = entry.get("mask")
    if mask_rel is None:
        mask = box_to_mask(box, width, height)
    else:
        mask_path = base / mask_rel
        if not mask_path.exists():
            raise ManifestError(f"{index_label}: mask file missing: {mask_path}")
        mask = load_mask_png(mask_path)
        if mask.bits.shape != (height, width):
            raise ManifestError(
                f"{index_label}: mask is {mask.width}x{mask.height},"
                f" image is {width}x{height}"
            )
    if mask.area == 0:
        raise ManifestError(f"{index_label}: empty region mask")
    return RegionCandidate(
        box=box,
        mask=mask,
        phrase=str(entry.get("phrase", default_phrase)),
        score=score,
    )


def load_case(manifest_path: PathLike) -> CaseBundle:
    """Hydrate a manifest into a fully validated bundle.

    Every violated invariant raises a :class:`ManifestError` naming the
    offending part; nothing is silently repaired (regions without a mask
    entry get the documented box rasterization, which is part of the schema
    contract, not a repair).
    """
    path = Path(manifest_path)
    base = path.parent
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot parse manifest {path}: {exc}") from exc

    for key in ("image", "regions", "features"):
        if key not in data:
            raise ManifestError(f"manifest missing required key {key!r}")

    image_path = base / data["image"]
    if not image_path.exists():
        raise ManifestError(f"image file missing: {image_path}")
    image = load_image(image_path)

    candidates = []
    for i, entry in enumerate(data["regions"]):
        candidates.append(_load_region(entry, f"region {i}", base, image.width, image.height))

    object_region = None
    if data.get("object_region") is not None:
        object_region = _load_region(
            data["object_region"], "object_region", base, image.width, image.height,
            default_phrase="object",
        )

    features_path = base / data["features"]
    if not features_path.exists():
        raise ManifestError(f"features file missing: {features_path}")
    try:
        features = read_tensor(features_path)
    except (TensorFormatError, TensorDataError) as exc:
        raise ManifestError(f"features: {exc}") from exc

    ground_truth = None
    if data.get("ground_truth") is not None:
        gt_path = base / data["ground_truth"]
        if not gt_path.exists():
            raise ManifestError(f"ground truth file missing: {gt_path}")
        ground_truth = load_mask_png(gt_path)
        if ground_truth.bits.shape != (image.height, image.width):
            raise ManifestError(
                f"ground truth is {ground_truth.width}x{ground_truth.height},"
                f" image is {image.width}x{image.height}"
            )

    return CaseBundle(
        image=image,
        candidates=tuple(candidates),
        features=features,
        object_region=object_region,
        ground_truth=ground_truth,
    )


def read_manifest_category(manifest_path: PathLike) -> Optional[str]:
    """Category metadata attached by dataset converters, if any."""
    try:
        data = json.loads(Path(manifest_path).read_text())
    except (OSError, json.JSONDecodeError):
        return None
    value = data.get("category")
    return str(value) if value is not None else None
