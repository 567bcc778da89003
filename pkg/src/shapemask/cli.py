"""Command line interface: shapemask <subcommand>.

Subcommands mirror the pipeline stages (segment, pseudoseg, region,
genmask, evalmask, baseline, metrics) plus `run` for whole-dataset batch
execution from a flat key=value config file.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evalkit, felz, maskgen, pipeline, pseg, region
from .felz import SegParams
from .imgio import load_image, save_image
from .maskgen import EvalMaskKind, MaskPolicy

CLI_EVAL_KINDS = {
    "segments": EvalMaskKind.SEGMENTS_OPS,
    "small-squares": EvalMaskKind.SMALL_SQUARES,
    "large-square": EvalMaskKind.LARGE_SQUARE,
}


def _binarize_method(args) -> "str | int":
    if args.binarize == "otsu":
        return "otsu"
    if args.threshold is None:
        raise SystemExit("--binarize fixed requires --threshold")
    return args.threshold


def _load_pseudosegments(image_path, labels_path):
    img = load_image(image_path)
    labels = felz.load_labelmap(labels_path)
    pset = pseg.compute_stats(labels, img)
    return img, pset, pseg.weight_biases(pset)


def cmd_segment(args) -> int:
    img = load_image(args.input)
    labels = felz.segment(img, SegParams(k=args.k, min_size=args.min_size, sigma=args.sigma))
    felz.save_labelmap(labels, args.out)
    print(f"{args.input}: {labels.segment_count} superpixels -> {args.out}")
    return 0


def cmd_pseudoseg(args) -> int:
    img = load_image(args.image)
    labels = felz.load_labelmap(args.labels)
    pset = pseg.compute_stats(labels, img)
    pset, merged = pseg.merge_pseudosegments(pset, labels, args.tau)
    wb = pseg.weight_biases(pset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    felz.save_labelmap(merged, out / "pseudosegments.pgm")
    pseg.save_manifest(pset, wb, out / "segments.csv")
    print(f"{args.image}: {len(pset)} pseudo-segments -> {out}")
    return 0


def cmd_region(args) -> int:
    img = load_image(args.input)
    organ = region.bounded_region(img, _binarize_method(args), args.radius)
    region.save_region(organ, args.out)
    print(f"{args.input}: region area {organ.area} px, bbox {organ.bbox} -> {args.out}")
    return 0


def cmd_genmask(args) -> int:
    img, pset, wb = _load_pseudosegments(args.image, args.labels)
    policy = MaskPolicy(
        position=args.position,
        shape=args.shape,
        m_max=args.m_max,
        perturb_radius_max=args.perturb,
    )
    organ = None
    if policy.position == "ibr":
        organ = region.bounded_region(img, _binarize_method(args), args.radius)
    rng = np.random.default_rng(args.seed)
    mask = maskgen.generate_training_mask(
        img, pset, wb, policy, rng, region=organ, store=args.store
    )
    maskgen.save_mask(mask, args.out)
    print(f"{args.image}: mask {mask.masked_count} px -> {args.out}")
    return 0


def cmd_evalmask(args) -> int:
    kind = CLI_EVAL_KINDS[args.kind]
    img = load_image(args.image)
    pset = wb = None
    if kind is not EvalMaskKind.LARGE_SQUARE:
        if args.labels is None:
            raise SystemExit(f"--kind {args.kind} requires --labels")
        img, pset, wb = _load_pseudosegments(args.image, args.labels)
    rng = np.random.default_rng(args.seed)
    mask = maskgen.eval_mask(kind, img, pset, wb, rng, m_max=args.m_max)
    maskgen.save_mask(mask, args.out)
    print(f"{args.image}: {args.kind} mask {mask.masked_count} px -> {args.out}")
    return 0


def cmd_baseline(args) -> int:
    img = load_image(args.image)
    mask = maskgen.load_mask(args.mask)
    filled = evalkit.diffusion_inpaint(img, mask, args.max_iters, args.tol, args.fill)
    save_image(filled, args.out)
    print(f"{args.image}: baseline diffusion fill -> {args.out}")
    return 0


def cmd_metrics(args) -> int:
    ref = load_image(args.ref)
    rec = load_image(args.rec)
    roi = maskgen.load_mask(args.roi)
    report = evalkit.score(ref, rec, roi, image_id=args.ref)
    print(f"psnr_db={report.psnr_db:.6f} ssim={report.ssim:.6f} roi_pixels={report.roi_pixels}")
    return 0


def cmd_run(args) -> int:
    cfg = pipeline.load_config(args.config) if args.config else pipeline.PipelineConfig()
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.out is not None:
        overrides["output_dir"] = Path(args.out)
    if args.dataset is not None:
        overrides["dataset_root"] = Path(args.dataset)
    if overrides:
        cfg = replace(cfg, **overrides)
    result = pipeline.run_pipeline(cfg)
    print(f"{len(result.records)} records -> {result.results_file}")
    for line in Path(result.summary_file).read_text().splitlines():
        print(line)
    if result.failures:
        for image_id, _ in result.failures:
            print(f"FAILED {image_id}", file=sys.stderr)
        return 1
    return 0


def _add_binarize_flags(sub) -> None:
    sub.add_argument("--binarize", choices=["otsu", "fixed"], default="otsu")
    sub.add_argument("--threshold", type=int, help="fixed binarization threshold")
    sub.add_argument("--radius", type=int, default=5, help="opening disk radius")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shapemask",
        description="Shape-aware inpainting mask generation and RoI evaluation",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("segment", help="over-segment an image into superpixels")
    sub.add_argument("--input", required=True)
    sub.add_argument("--k", type=float, default=2.0)
    sub.add_argument("--min-size", type=int, default=9)
    sub.add_argument("--sigma", type=float, default=0.5)
    sub.add_argument("--out", required=True, help="16-bit PGM label map path")
    sub.set_defaults(func=cmd_segment)

    sub = subs.add_parser("pseudoseg", help="merge superpixels into pseudo-segments")
    sub.add_argument("--labels", required=True)
    sub.add_argument("--image", required=True)
    sub.add_argument("--tau", type=float, default=10.0)
    sub.add_argument("--out", required=True, help="output directory")
    sub.set_defaults(func=cmd_pseudoseg)

    sub = subs.add_parser("region", help="extract the organ's bounded region")
    sub.add_argument("--input", required=True)
    _add_binarize_flags(sub)
    sub.add_argument("--out", required=True, help="region PNG path")
    sub.set_defaults(func=cmd_region)

    sub = subs.add_parser("genmask", help="generate one training mask")
    sub.add_argument("--image", required=True)
    sub.add_argument("--labels", required=True, help="pseudo-segment label map")
    sub.add_argument("--position", choices=list(maskgen.POSITIONS), default="ops")
    sub.add_argument("--shape", choices=list(maskgen.SHAPES), default="ps")
    sub.add_argument("--m-max", type=int, default=8)
    sub.add_argument("--perturb", type=int, default=2, help="max perturbation radius")
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--store", help="irregular mask directory (shape=irregular)")
    _add_binarize_flags(sub)
    sub.add_argument("--out", required=True, help="mask PNG path")
    sub.set_defaults(func=cmd_genmask)

    sub = subs.add_parser("evalmask", help="generate one evaluation-protocol mask")
    sub.add_argument("--kind", choices=sorted(CLI_EVAL_KINDS), required=True)
    sub.add_argument("--image", required=True)
    sub.add_argument("--labels", help="pseudo-segment label map (segment-based kinds)")
    sub.add_argument("--m-max", type=int, default=8)
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--out", required=True, help="mask PNG path")
    sub.set_defaults(func=cmd_evalmask)

    sub = subs.add_parser("baseline", help="fill a masked image by harmonic diffusion")
    sub.add_argument("--image", required=True)
    sub.add_argument("--mask", required=True)
    sub.add_argument("--max-iters", type=int, default=5000)
    sub.add_argument("--tol", type=float, default=1e-3)
    sub.add_argument("--fill", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=cmd_baseline)

    sub = subs.add_parser("metrics", help="RoI-restricted PSNR and SSIM")
    sub.add_argument("--ref", required=True)
    sub.add_argument("--rec", required=True)
    sub.add_argument("--roi", required=True)
    sub.set_defaults(func=cmd_metrics)

    sub = subs.add_parser("run", help="batch pipeline over a dataset")
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--dataset", help="dataset root (overrides config)")
    sub.add_argument("--seed", type=int, help="master seed (overrides config)")
    sub.add_argument("--jobs", type=int, help="worker count (overrides config)")
    sub.add_argument("--out", help="output directory (overrides config)")
    sub.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
