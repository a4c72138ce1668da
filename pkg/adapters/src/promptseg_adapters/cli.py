"""Adapter command line: dataset conversion and manifest comparison.

``extract`` walks a dataset layout, runs the detector / refiner / backbone
stack on every test image and emits one engine-ready case directory per
image. ``compare`` checks two emitted trees for equality with a score
tolerance (scores may drift across hardware).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional

from .backends import build_backends
from .config import AdapterConfig, PromptSet
from .datasets import LAYOUTS, discover_samples
from .extract import build_case
from .formats import manifests_match

log = logging.getLogger("promptseg_adapters")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2


def _setup_logging() -> None:
    level = os.environ.get("SAA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def cmd_extract(args) -> int:
    config = AdapterConfig(
        detector_checkpoint=args.detector_checkpoint,
        detector_config=args.detector_config,
        segmenter_checkpoint=args.segmenter_checkpoint,
        backbone_checkpoint=args.backbone_checkpoint,
        device=args.device,
        input_size=args.input_size,
        box_threshold=args.box_threshold,
        backbone_layer=args.backbone_layer,
        prompts=PromptSet.from_json(args.prompts) if args.prompts else PromptSet(),
    )
    try:
        config.validate()
        samples, skipped = discover_samples(args.dataset, args.layout)
    except (FileNotFoundError, ValueError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE

    if args.category:
        samples = [s for s in samples if s.category in set(args.category)]
    if not samples:
        print("no samples found in dataset", file=sys.stderr)
        return EXIT_USAGE

    try:
        detector, refiner, extractor = build_backends(config, args.backend)
    except (RuntimeError, ValueError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE

    out_root = Path(args.out)
    failures = 0
    for sample in samples:
        try:
            result = build_case(
                sample.image_path,
                sample.gt_path,
                sample.category,
                out_root / sample.case_id,
                config,
                detector,
                refiner,
                extractor,
            )
            for message in result.failures:
                log.warning("%s: %s", sample.case_id, message)
        except Exception as exc:
            failures += 1
            print(f"FAILED {sample.case_id}: {type(exc).__name__}: {exc}", file=sys.stderr)

    done = len(samples) - failures
    print(f"exported {done} case(s) to {out_root}"
          f" ({len(skipped)} skipped for missing ground truth, {failures} failed)")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_compare(args) -> int:
    a_manifests = sorted(Path(args.a).rglob("manifest.json"))
    b_manifests = sorted(Path(args.b).rglob("manifest.json"))
    ids_a = {p.parent.name: p for p in a_manifests}
    ids_b = {p.parent.name: p for p in b_manifests}
    if ids_a.keys() != ids_b.keys():
        print("case sets differ", file=sys.stderr)
        return EXIT_PARTIAL
    for case_id in sorted(ids_a):
        ok, why = manifests_match(ids_a[case_id], ids_b[case_id], args.score_tol)
        if not ok:
            print(f"{case_id}: {why}", file=sys.stderr)
            return EXIT_PARTIAL
    print(f"{len(ids_a)} case(s) match within score tolerance {args.score_tol}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptseg-extract",
        description="Export engine-ready case bundles from inspection datasets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ex = sub.add_parser("extract", help="convert a dataset into case bundles")
    p_ex.add_argument("--dataset", required=True, help="dataset root directory")
    p_ex.add_argument("--layout", required=True, choices=LAYOUTS)
    p_ex.add_argument("--out", required=True, help="output directory")
    p_ex.add_argument("--prompts", help="prompt-set JSON file")
    p_ex.add_argument("--backend", default="offline", choices=["offline", "real"])
    p_ex.add_argument("--category", action="append", help="restrict to a category")
    p_ex.add_argument("--device", default="cpu")
    p_ex.add_argument("--input-size", dest="input_size", type=int, default=400)
    p_ex.add_argument("--box-threshold", dest="box_threshold", type=float, default=0.05)
    p_ex.add_argument("--backbone-layer", dest="backbone_layer", default="layer2")
    p_ex.add_argument("--detector-checkpoint", dest="detector_checkpoint")
    p_ex.add_argument("--detector-config", dest="detector_config")
    p_ex.add_argument("--segmenter-checkpoint", dest="segmenter_checkpoint")
    p_ex.add_argument("--backbone-checkpoint", dest="backbone_checkpoint")
    p_ex.set_defaults(func=cmd_extract)

    p_cmp = sub.add_parser("compare", help="compare two emitted manifest trees")
    p_cmp.add_argument("--a", required=True)
    p_cmp.add_argument("--b", required=True)
    p_cmp.add_argument("--score-tol", dest="score_tol", type=float, default=1e-3)
    p_cmp.set_defaults(func=cmd_compare)

    return parser


def main(argv: Optional[list] = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
