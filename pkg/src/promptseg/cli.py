"""Command-line entry point.

Subcommands: ``run`` (batch pipeline execution), ``eval`` (metrics against
ground truth), ``fixture`` (synthetic suite generation), ``viz`` (heatmap
overlay) and ``inspect`` (tensor header dump). Exit codes: 0 success,
1 partial per-case failures, 2 usage/config errors. ``SAA_LOG`` selects the
log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from .core import AnomalyMap, BinaryMask, PipelineConfig, PipelineToggles
from .fixtures import FixtureSpec, generate_case, standard_spec, write_suite
from .interchange import (
    ManifestError,
    inspect_tensor,
    load_case,
    load_image,
    read_anomaly_map,
    read_manifest_category,
    save_image,
    write_anomaly_map,
)
from .metrics import aggregate
from .pipeline import run_pipeline

log = logging.getLogger("promptseg")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2

_DISABLE_MAP = {
    "property_filter": "property_filter",
    "saliency": "saliency_prompt",
    "confidence": "confidence_prompt",
}


def _setup_logging() -> None:
    level = os.environ.get("SAA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _collect_manifests(paths: list[str]) -> list[Path]:
    manifests: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            if (p / "manifest.json").exists():
                manifests.append(p / "manifest.json")
            else:
                manifests.extend(sorted(p.rglob("manifest.json")))
        elif p.exists():
            manifests.append(p)
        else:
            raise FileNotFoundError(f"no such manifest or directory: {p}")
    return manifests


def _case_id(manifest: Path, taken: dict) -> str:
    base = manifest.parent.name if manifest.name == "manifest.json" else manifest.stem
    count = taken.get(base, 0)
    taken[base] = count + 1
    return base if count == 0 else f"{base}_{count}"


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise SystemExit(f"cannot read config {args.config}: {exc}")
        cfg = PipelineConfig.from_dict(data)

    overrides = {}
    for name in ("theta_iou", "theta_area", "top_k", "n_neighbors", "overlap_mode"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    toggles = {
        "property_filter": cfg.toggles.property_filter,
        "saliency_prompt": cfg.toggles.saliency_prompt,
        "confidence_prompt": cfg.toggles.confidence_prompt,
    }
    for stage in getattr(args, "disable", None) or []:
        toggles[_DISABLE_MAP[stage]] = False
    data = cfg.to_dict()
    data.update(overrides)
    data["toggles"] = toggles
    return PipelineConfig.from_dict(data)


def _process_case(manifest: str, case_id: str, cfg_dict: dict, out_dir: str) -> dict:
    """Worker body: load, run, write map and trace; isolated per case."""
    started = time.perf_counter()
    entry = {"case": case_id, "manifest": manifest}
    try:
        cfg = PipelineConfig.from_dict(cfg_dict)
        bundle = load_case(manifest)
        amap, trace = run_pipeline(bundle, cfg)
        out = Path(out_dir)
        map_path = out / f"{case_id}.anomaly.saat"
        trace_path = out / f"{case_id}.trace.json"
        write_anomaly_map(amap, map_path)
        trace_path.write_text(
            json.dumps(trace.to_dict(include_timings=False), indent=2, sort_keys=True) + "\n"
        )
        entry.update({
            "status": "ok",
            "map": str(map_path),
            "trace": str(trace_path),
            "stage_counts": trace.stage_counts,
            "wall_time_s": time.perf_counter() - started,
        })
    except Exception as exc:  # per-case failures must not kill the batch
        entry.update({
            "status": "error",
            "error": f"{type(exc).__name__}: {exc}",
            "wall_time_s": time.perf_counter() - started,
        })
    return entry


def cmd_run(args) -> int:
    try:
        manifests = _collect_manifests(args.manifests)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if not manifests:
        print("no manifests found", file=sys.stderr)
        return EXIT_USAGE
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    taken: dict = {}
    jobs = [(str(m), _case_id(m, taken)) for m in manifests]
    cfg_dict = cfg.to_dict()

    workers = args.workers or os.cpu_count() or 1
    started = time.perf_counter()
    if workers <= 1:
        entries = [_process_case(m, cid, cfg_dict, str(out)) for m, cid in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_process_case, m, cid, cfg_dict, str(out)) for m, cid in jobs]
            entries = [f.result() for f in futures]

    failures = [e for e in entries if e["status"] != "ok"]
    summary = {
        "cases": entries,
        "totals": {
            "count": len(entries),
            "ok": len(entries) - len(failures),
            "failed": len(failures),
            "wall_time_s": time.perf_counter() - started,
        },
        "config": cfg_dict,
        "workers": workers,
    }
    (out / "run_summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    for entry in failures:
        print(f"FAILED {entry['case']}: {entry['error']}", file=sys.stderr)
    print(f"processed {len(entries)} case(s), {len(failures)} failed, output in {out}")
    return EXIT_PARTIAL if failures else EXIT_OK


def _load_truth(manifest: Path) -> BinaryMask:
    data = json.loads(manifest.read_text())
    image_path = manifest.parent / data["image"]
    image = load_image(image_path)
    if data.get("ground_truth") is None:
        return BinaryMask(np.zeros((image.height, image.width), dtype=bool))
    from .interchange import load_mask_png

    return load_mask_png(manifest.parent / data["ground_truth"])


def cmd_eval(args) -> int:
    try:
        manifests = _collect_manifests(args.manifests)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if not manifests:
        print("no manifests found", file=sys.stderr)
        return EXIT_USAGE
    pred_dir = Path(args.pred)

    grouping = {}
    if args.grouping:
        try:
            grouping = json.loads(Path(args.grouping).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"cannot read grouping file: {exc}", file=sys.stderr)
            return EXIT_USAGE

    predictions: list[AnomalyMap] = []
    truths: list[BinaryMask] = []
    categories: list[str] = []
    taken: dict = {}
    for manifest in manifests:
        case_id = _case_id(manifest, taken)
        pred_path = pred_dir / f"{case_id}.anomaly.saat"
        if not pred_path.exists():
            print(f"missing prediction for case {case_id}: {pred_path}", file=sys.stderr)
            return EXIT_USAGE
        try:
            predictions.append(read_anomaly_map(pred_path))
            truths.append(_load_truth(manifest))
        except (ManifestError, ValueError, OSError) as exc:
            print(f"case {case_id}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        categories.append(
            grouping.get(case_id) or read_manifest_category(manifest) or "all"
        )

    report = aggregate(
        predictions,
        truths,
        categories,
        pixel_mode=args.pixel_mode,
        region_min_overlap=args.region_min_overlap,
        region_overlap_kind=args.region_overlap,
    )
    print(report.format_table())
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        print(f"report written to {args.report}")
    return EXIT_OK


def cmd_fixture(args) -> int:
    out = Path(args.out)
    if args.standard:
        cases = [generate_case(standard_spec(seed)) for seed in range(args.standard)]
    elif args.spec:
        try:
            data = json.loads(Path(args.spec).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"cannot read spec file: {exc}", file=sys.stderr)
            return EXIT_USAGE
        if "seeds" in data:
            base = data.get("base", {})
            cases = [
                generate_case(FixtureSpec.from_dict({**base, "seed": seed}))
                for seed in data["seeds"]
            ]
        else:
            cases = [generate_case(FixtureSpec.from_dict(data))]
    else:
        print("fixture needs a spec file or --standard N", file=sys.stderr)
        return EXIT_USAGE
    paths = write_suite(cases, out)
    print(f"wrote {len(paths)} case(s) under {out}")
    return EXIT_OK


def _heat_color(norm: np.ndarray) -> np.ndarray:
    """Tiny blue->red->yellow ramp; norm is (H, W) in [0, 1]."""
    r = np.clip(1.5 - np.abs(4 * norm - 3.0), 0, 1)
    g = np.clip(1.5 - np.abs(4 * norm - 2.0), 0, 1)
    b = np.clip(1.5 - np.abs(4 * norm - 1.0), 0, 1)
    return np.stack([r, g, b], axis=-1)


def cmd_viz(args) -> int:
    amap = read_anomaly_map(args.map)
    image = load_image(args.image)
    if (image.height, image.width) != amap.values.shape:
        print("map and image dimensions differ", file=sys.stderr)
        return EXIT_USAGE
    values = amap.values
    vmax, vmin = float(values.max()), float(values.min())
    norm = (values - vmin) / (vmax - vmin) if vmax > vmin else np.zeros_like(values)
    alpha = norm[..., None]
    blended = (1 - alpha) * image.pixel_data.astype(np.float64) \
        + alpha * _heat_color(norm) * 255.0
    out = np.clip(np.round(blended), 0, 255).astype(np.uint8)
    from .core import ImageRef

    save_image(ImageRef(image.width, image.height, out), args.out)
    print(f"overlay written to {args.out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    info = inspect_tensor(args.tensor)
    for key in ("magic", "version", "dtype", "ndim", "dims", "payload_bytes"):
        print(f"{key}: {info[key]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptseg",
        description="Training-free anomaly segmentation over interchange bundles",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the pipeline over case manifests")
    p_run.add_argument("manifests", nargs="+", help="manifest files or directories")
    p_run.add_argument("--config", help="pipeline config JSON")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument(
        "--disable", action="append", choices=sorted(_DISABLE_MAP),
        help="disable a stage (repeatable)",
    )
    p_run.add_argument("--workers", type=int, help="worker processes (default: cores)")
    p_run.add_argument("--overlap-mode", dest="overlap_mode",
                       choices=["intersection-over-region", "intersection-over-union"])
    p_run.add_argument("--theta-iou", dest="theta_iou", type=float)
    p_run.add_argument("--theta-area", dest="theta_area", type=float)
    p_run.add_argument("--top-k", dest="top_k", type=int)
    p_run.add_argument("--n-neighbors", dest="n_neighbors", type=int)
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p_eval.add_argument("manifests", nargs="+", help="manifest files or directories")
    p_eval.add_argument("--pred", required=True, help="directory with *.anomaly.saat maps")
    p_eval.add_argument("--grouping", help="JSON file mapping case id to category")
    p_eval.add_argument("--report", help="write the report JSON here")
    p_eval.add_argument("--pixel-mode", default="auto", choices=["auto", "exact", "quantized"])
    p_eval.add_argument("--region-overlap", default="iou",
                        choices=["iou", "intersection-over-gt"])
    p_eval.add_argument("--region-min-overlap", type=float, default=0.6)
    p_eval.set_defaults(func=cmd_eval)

    p_fix = sub.add_parser("fixture", help="generate synthetic case suites")
    p_fix.add_argument("spec", nargs="?", help="fixture spec JSON file")
    p_fix.add_argument("--standard", type=int, metavar="N",
                       help="generate the standard suite with seeds 0..N-1")
    p_fix.add_argument("--out", required=True, help="output directory")
    p_fix.set_defaults(func=cmd_fixture)

    p_viz = sub.add_parser("viz", help="overlay an anomaly map on its image")
    p_viz.add_argument("map", help="anomaly map tensor")
    p_viz.add_argument("image", help="case image PNG")
    p_viz.add_argument("out", help="output PNG")
    p_viz.set_defaults(func=cmd_viz)

    p_ins = sub.add_parser("inspect", help="print a tensor file header")
    p_ins.add_argument("tensor")
    p_ins.set_defaults(func=cmd_inspect)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return EXIT_USAGE
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
