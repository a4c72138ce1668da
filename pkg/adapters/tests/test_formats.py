import json
import struct

import numpy as np
import pytest

from promptseg_adapters.formats import (
    manifests_match,
    write_manifest,
    write_mask_png,
    write_tensor,
)


class TestTensorLayout:
    def test_header_bytes(self, tmp_path):
        path = tmp_path / "t.saat"
        write_tensor(np.zeros((2, 3, 4), np.float32), path)
        raw = path.read_bytes()
        assert raw[:4] == b"SAAT"
        assert raw[4] == 1  # version
        assert raw[5] == 1  # float32 little-endian
        assert raw[6] == 3  # ndim
        assert struct.unpack("<3I", raw[7:19]) == (2, 3, 4)
        assert len(raw) == 19 + 4 * 24

    def test_payload_row_major(self, tmp_path):
        path = tmp_path / "t.saat"
        values = np.arange(6, dtype=np.float32).reshape(1, 2, 3)
        write_tensor(values, path)
        payload = np.frombuffer(path.read_bytes()[19:], dtype="<f4")
        assert np.array_equal(payload, np.arange(6, dtype=np.float32))

    def test_rejects_empty_and_nonfinite(self, tmp_path):
        with pytest.raises(ValueError):
            write_tensor(np.zeros((0, 3), np.float32), tmp_path / "e.saat")
        bad = np.zeros((2, 2), np.float32)
        bad[0, 0] = np.inf
        with pytest.raises(ValueError):
            write_tensor(bad, tmp_path / "inf.saat")


class TestMaskPng:
    def test_nonzero_is_foreground(self, tmp_path):
        from PIL import Image

        bits = np.zeros((5, 5), bool)
        bits[1:3, 1:3] = True
        write_mask_png(bits, tmp_path / "m.png")
        back = np.asarray(Image.open(tmp_path / "m.png").convert("L"))
        assert np.array_equal(back != 0, bits)
        assert back.max() == 255


class TestManifest:
    def test_schema_keys(self, tmp_path):
        write_manifest(
            tmp_path,
            regions=[{"box": [0, 0, 2, 2], "score": 0.5, "phrase": "x", "mask": None}],
            object_region=None,
            ground_truth="gt.png",
            extra={"category": "widget"},
        )
        data = json.loads((tmp_path / "manifest.json").read_text())
        assert set(data) >= {"image", "regions", "object_region", "features", "ground_truth"}
        assert data["category"] == "widget"
        assert data["regions"][0]["phrase"] == "x"

    def test_compare_tolerates_score_drift(self, tmp_path):
        a_dir = tmp_path / "a"
        b_dir = tmp_path / "b"
        a_dir.mkdir()
        b_dir.mkdir()
        region = {"box": [0, 0, 2, 2], "score": 0.5, "phrase": "x", "mask": None}
        write_manifest(a_dir, [dict(region)], None, None)
        drifted = dict(region, score=0.5004)
        write_manifest(b_dir, [drifted], None, None)
        ok, _ = manifests_match(a_dir / "manifest.json", b_dir / "manifest.json", 1e-3)
        assert ok
        ok, why = manifests_match(a_dir / "manifest.json", b_dir / "manifest.json", 1e-5)
        assert not ok and "score" in why

    def test_compare_rejects_structural_drift(self, tmp_path):
        a_dir = tmp_path / "a"
        b_dir = tmp_path / "b"
        a_dir.mkdir()
        b_dir.mkdir()
        region = {"box": [0, 0, 2, 2], "score": 0.5, "phrase": "x", "mask": None}
        write_manifest(a_dir, [region], None, None)
        moved = dict(region, box=[0, 0, 3, 3])
        write_manifest(b_dir, [moved], None, None)
        ok, why = manifests_match(a_dir / "manifest.json", b_dir / "manifest.json")
        assert not ok
