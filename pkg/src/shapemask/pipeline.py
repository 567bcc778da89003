"""End-to-end batch orchestration: scan, split, segment, mask, fill, score.

The dataset layout is <root>/<patient_id>/*.png|*.pgm. Patients are split
atomically into train and eval groups; every image is processed with a
seed derived from (master seed, image id, mask kind), so runs are
reproducible for any worker count. Per-image failures are recorded and
skipped rather than aborting the batch.
"""

from __future__ import annotations

import csv
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import evalkit, felz, maskgen, pseg, region
from .felz import SegParams
from .imgio import GrayImage, load_image, save_image
from .maskgen import EvalMaskKind, MaskPolicy

TRAINING_KIND = "training"

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
U64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class PipelineConfig:
    """Batch-run configuration; the numeric defaults are the working set."""

    seg: SegParams = field(default_factory=SegParams)
    tau: float = 10.0
    policy: MaskPolicy = field(default_factory=MaskPolicy)
    eval_kinds: tuple[str, ...] = ("segments_ops", "small_squares", "large_square")
    binarize: str | int = "otsu"
    opening_radius: int = 5
    train_ratio: float = 0.75
    master_seed: int = 0
    dataset_root: Path | None = None
    output_dir: Path | None = None
    irregular_store: Path | None = None
    inpaint_max_iters: int = 5000
    inpaint_tol: float = 1e-3
    mask_fill: int = 0
    jobs: int = 1


@dataclass(frozen=True)
class DatasetManifest:
    """All discovered images plus the per-patient train/eval assignment."""

    entries: list[tuple[str, Path]]
    split: dict[str, str]

    def split_of(self, patient_id: str) -> str:
        return self.split[patient_id]


@dataclass(frozen=True)
class ResultRecord:
    image_id: str
    mask_kind: str
    position: str
    shape: str
    psnr_db: float
    ssim: float
    roi_pixels: int


@dataclass(frozen=True)
class PipelineResult:
    records: list[ResultRecord]
    failures: list[tuple[str, str]]
    results_file: Path
    summary_file: Path


def derive_seed(master: int, image_id: str) -> int:
    """Stable 64-bit per-item seed: FNV-1a over the id, XOR master, one mix round."""
    h = FNV_OFFSET
    for byte in image_id.encode("utf-8"):
        h = ((h ^ byte) * FNV_PRIME) & U64
    z = h ^ (master & U64)
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & U64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & U64
    z ^= z >> 31
    return z


def scan_dataset(root) -> list[tuple[str, list[Path]]]:
    """Patients (subdirectories) with their sorted .png/.pgm image paths."""
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"dataset root {root} is not a directory")
    patients = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        images = sorted(p for p in sub.iterdir() if p.suffix.lower() in (".png", ".pgm"))
        if images:
            patients.append((sub.name, images))
    return patients


def split_patients(
    patients: list[tuple[str, list[Path]]], ratio: float, seed: int
) -> DatasetManifest:
    """Patient-level train/eval split: shuffle by seed, first round(ratio*P) train."""
    if not patients:
        raise ValueError("no patients to split")
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    order = np.random.default_rng(seed).permutation(len(patients))
    n_train = int(ratio * len(patients) + 0.5)
    split = {}
    for rank, idx in enumerate(order):
        split[patients[idx][0]] = "train" if rank < n_train else "eval"
    entries = [(pid, path) for pid, paths in patients for path in paths]
    return DatasetManifest(entries=entries, split=split)


# ---------------------------------------------------------------------------
# Flat key=value config files; CLI flags override file values
# ---------------------------------------------------------------------------

def read_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def config_from_values(values: dict[str, str]) -> PipelineConfig:
    cfg = PipelineConfig()
    seg = cfg.seg
    policy = cfg.policy
    if "k" in values:
        seg = replace(seg, k=float(values["k"]))
    if "min_size" in values:
        seg = replace(seg, min_size=int(values["min_size"]))
    if "sigma" in values:
        seg = replace(seg, sigma=float(values["sigma"]))
    if "position" in values:
        policy = replace(policy, position=values["position"])
    if "shape" in values:
        policy = replace(policy, shape=values["shape"])
    if "m_max" in values:
        policy = replace(policy, m_max=int(values["m_max"]))
    if "perturb_radius_max" in values:
        policy = replace(policy, perturb_radius_max=int(values["perturb_radius_max"]))
    updates: dict = {"seg": seg, "policy": policy}
    if "tau" in values:
        updates["tau"] = float(values["tau"])
    if "eval_kinds" in values:
        kinds = tuple(k.strip() for k in values["eval_kinds"].split(",") if k.strip())
        for kind in kinds:
            EvalMaskKind(kind)  # validate early
        updates["eval_kinds"] = kinds
    if "binarize" in values:
        raw = values["binarize"]
        updates["binarize"] = raw if raw == "otsu" else int(raw)
    if "opening_radius" in values:
        updates["opening_radius"] = int(values["opening_radius"])
    if "train_ratio" in values:
        updates["train_ratio"] = float(values["train_ratio"])
    if "master_seed" in values:
        updates["master_seed"] = int(values["master_seed"])
    if "dataset_root" in values:
        updates["dataset_root"] = Path(values["dataset_root"])
    if "output_dir" in values:
        updates["output_dir"] = Path(values["output_dir"])
    if "irregular_store" in values:
        updates["irregular_store"] = Path(values["irregular_store"])
    if "inpaint_max_iters" in values:
        updates["inpaint_max_iters"] = int(values["inpaint_max_iters"])
    if "inpaint_tol" in values:
        updates["inpaint_tol"] = float(values["inpaint_tol"])
    if "mask_fill" in values:
        updates["mask_fill"] = int(values["mask_fill"])
    if "jobs" in values:
        updates["jobs"] = int(values["jobs"])
    return replace(cfg, **updates)


def load_config(path) -> PipelineConfig:
    return config_from_values(read_config_file(path))


# ---------------------------------------------------------------------------
# Per-image work
# ---------------------------------------------------------------------------

def _mask_kinds_for(cfg: PipelineConfig, split: str) -> list[str]:
    if split == "train":
        return [TRAINING_KIND]
    return [k for k in cfg.eval_kinds]


def process_image(
    cfg: PipelineConfig, patient_id: str, path: Path, split: str
) -> list[ResultRecord]:
    """segment -> merge -> weights -> masks -> baseline fill -> metrics for one image.

    Writes all artifacts under <output_dir>/<patient>/<stem>/ and returns
    the metric records.
    """
    image_id = f"{patient_id}/{path.stem}"
    out_dir = Path(cfg.output_dir) / patient_id / path.stem
    out_dir.mkdir(parents=True, exist_ok=True)

    img = load_image(path)
    labels = felz.segment(img, cfg.seg)
    felz.save_labelmap(labels, out_dir / "superpixels.pgm")
    pset = pseg.compute_stats(labels, img)
    pset, merged = pseg.merge_pseudosegments(pset, labels, cfg.tau)
    felz.save_labelmap(merged, out_dir / "pseudosegments.pgm")
    wb = pseg.weight_biases(pset)
    pseg.save_manifest(pset, wb, out_dir / "segments.csv")

    needs_region = cfg.policy.position == "ibr" and split == "train"
    organ = None
    if needs_region:
        organ = region.bounded_region(img, cfg.binarize, cfg.opening_radius)
        region.save_region(organ, out_dir / "region.png")

    records = []
    for kind in _mask_kinds_for(cfg, split):
        rng = np.random.default_rng(derive_seed(cfg.master_seed, f"{image_id}:{kind}"))
        if kind == TRAINING_KIND:
            mask = maskgen.generate_training_mask(
                img, pset, wb, cfg.policy, rng, region=organ, store=cfg.irregular_store
            )
            position, shape = cfg.policy.position, cfg.policy.shape
        else:
            mask = maskgen.eval_mask(
                EvalMaskKind(kind), img, pset, wb, rng, m_max=cfg.policy.m_max
            )
            position, shape = "eval", kind
        maskgen.save_mask(mask, out_dir / f"mask_{kind}.png")
        filled = evalkit.diffusion_inpaint(
            img, mask, cfg.inpaint_max_iters, cfg.inpaint_tol, cfg.mask_fill
        )
        save_image(filled, out_dir / f"fill_{kind}.png")
        report = evalkit.score(img, filled, mask, image_id)
        records.append(
            ResultRecord(
                image_id=image_id,
                mask_kind=kind,
                position=position,
                shape=shape,
                psnr_db=report.psnr_db,
                ssim=report.ssim,
                roi_pixels=report.roi_pixels,
            )
        )
    return records


def _worker(args) -> tuple[str, list[ResultRecord] | None, str | None]:
    cfg, patient_id, path, split = args
    image_id = f"{patient_id}/{path.stem}"
    try:
        return image_id, process_image(cfg, patient_id, path, split), None
    except Exception:
        return image_id, None, traceback.format_exc()


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Process every dataset image; write results.csv and summary.csv.

    The output tree is a pure function of (dataset, config, master seed),
    independent of the worker count. Raises if the dataset is empty;
    per-image failures are collected in failures.txt instead of aborting.
    """
    if cfg.dataset_root is None or cfg.output_dir is None:
        raise ValueError("dataset_root and output_dir must be configured")
    patients = scan_dataset(cfg.dataset_root)
    if not patients:
        raise ValueError(f"no patient images found under {cfg.dataset_root}")
    manifest = split_patients(patients, cfg.train_ratio, cfg.master_seed)

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (cfg, pid, path, manifest.split_of(pid)) for pid, path in manifest.entries
    ]

    records: list[ResultRecord] = []
    failures: list[tuple[str, str]] = []
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(_worker, tasks))
    else:
        outcomes = [_worker(t) for t in tasks]
    for image_id, recs, error in outcomes:
        if error is None:
            records.extend(recs)
        else:
            failures.append((image_id, error))

    records.sort(key=lambda r: (r.image_id, r.mask_kind))
    results_file = out_dir / "results.csv"
    with open(results_file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["image_id", "mask_kind", "position", "shape", "psnr_db", "ssim", "roi_pixels"]
        )
        for r in records:
            writer.writerow(
                [r.image_id, r.mask_kind, r.position, r.shape,
                 f"{r.psnr_db:.6f}", f"{r.ssim:.6f}", r.roi_pixels]
            )

    summary_file = out_dir / "summary.csv"
    by_kind: dict[str, list[ResultRecord]] = {}
    for r in records:
        by_kind.setdefault(r.mask_kind, []).append(r)
    with open(summary_file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mask_kind", "n_images", "mean_psnr_db", "mean_ssim"])
        for kind in sorted(by_kind):
            group = by_kind[kind]
            mean_psnr = sum(g.psnr_db for g in group) / len(group)
            mean_ssim = sum(g.ssim for g in group) / len(group)
            writer.writerow([kind, len(group), f"{mean_psnr:.6f}", f"{mean_ssim:.6f}"])

    if failures:
        with open(out_dir / "failures.txt", "w") as fh:
            for image_id, error in failures:
                fh.write(f"== {image_id} ==\n{error}\n")
    return PipelineResult(
        records=records,
        failures=failures,
        results_file=results_file,
        summary_file=summary_file,
    )
