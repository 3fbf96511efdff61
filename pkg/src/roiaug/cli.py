"""Batch command-line interface.

Subcommands: ``bank`` (generate ROI banks), ``sample`` (emit augmented crops +
audit log), ``split`` (patient-level folds), ``eval`` (metric report from a
predictions CSV), ``stats`` (fold-wise comparison with Wilcoxon test) and
``viz`` (bank overlay export).  All randomness flows from the single config
``seed``; no command reads ambient entropy.  Exit status is 0 iff the run had
zero errors; warnings never change it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import augment, bank, cohort, metrics, raster, tissue
from .config import RunConfig, load_config
from .errors import RoiAugError, UndefinedMetricError
from .rng import UniformStream
from .saliency import compute_saliency

SPEC_VERSION = "1"


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


def _safe_name(image_id: str) -> str:
    return image_id.replace("/", "__").replace("\\", "__")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _load_run_config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None), getattr(args, "set", []) or [])
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _training_records(records, fold_file, fold):
    """Restrict to patients outside the named validation fold."""
    if fold_file is None:
        return list(records)
    if fold is None:
        raise ValueError("--fold is required when --fold-file is given")
    rows = cohort.read_fold_file(fold_file)
    report = cohort.verify_no_leakage(records, rows)
    if not report.passed:
        raise ValueError(
            f"fold file failed leakage audit: multi-fold={report.multi_fold_patients} "
            f"unassigned={report.unassigned_images}")
    fold_of = dict(rows)
    return [r for r in records if fold_of[r.patient_id] != fold]


# --- bank --------------------------------------------------------------------

def _bank_task(task):
    index, path, image_id, mask_cfg, sal_cfg, bank_cfg = task
    try:
        img = raster.load_gray(path)
    except (OSError, RoiAugError) as exc:
        return index, None, f"{path}: {exc}"
    return index, bank.build_bank(img, image_id, mask_cfg, sal_cfg, bank_cfg), None


def cmd_bank(args) -> int:
    cfg = _load_run_config(args)
    manifest = cohort.parse_manifest(args.manifest)
    records = _training_records(manifest.records, args.fold_file, args.fold)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = [(i, r.path, r.image_id, cfg.mask, cfg.saliency, cfg.bank)
             for i, r in enumerate(records)]
    results: dict = {}
    errors = []
    t0 = time.perf_counter()
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            for index, built, err in pool.map(_bank_task, tasks, chunksize=4):
                results[index] = built
                if err:
                    errors.append(err)
    else:
        for task in tasks:
            index, built, err = _bank_task(task)
            results[index] = built
            if err:
                errors.append(err)
    elapsed = time.perf_counter() - t0

    banks = [results[i] for i in range(len(tasks)) if results[i] is not None]
    bank.write_banks(banks, out_dir / "banks.jsonl")

    if args.export_masks:
        mask_dir = out_dir / "masks"
        mask_dir.mkdir(exist_ok=True)
        for r in records:
            try:
                img = raster.load_gray(r.path)
            except (OSError, RoiAugError):
                continue
            m, _ = tissue.build_tissue_mask(img, cfg.mask)
            raster.save_pgm(m.astype(np.float64), mask_dir / f"{_safe_name(r.image_id)}.pgm")

    n = len(banks)
    maskless = sum(1 for b in banks if b.maskless)
    mean_boxes = float(np.mean([len(b.boxes) for b in banks])) if banks else 0.0
    summary = {
        "images": n,
        "maskless": maskless,
        "mean_boxes": mean_boxes,
        "failed": sorted(errors),
        "rejected_paths": list(manifest.rejects),
    }
    _atomic_write_text(out_dir / "bank_summary.json",
                       json.dumps(summary, indent=2, sort_keys=True) + "\n")
    rate = n / elapsed if elapsed > 0 else float("inf")
    print(json.dumps({**summary,
                      "images_per_sec": rate,
                      "ms_per_image": (1000.0 * elapsed / n) if n else 0.0}))
    return 1 if errors else 0


# --- sample ------------------------------------------------------------------

def cmd_sample(args) -> int:
    cfg = _load_run_config(args)
    manifest = cohort.parse_manifest(args.manifest)
    banks = {b.image_id: b for b in bank.read_banks(args.banks)}
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    expected_hash = bank.config_hash(cfg.mask, cfg.saliency, cfg.bank)

    errors = []
    audit_rows = []
    save = raster.save_png if args.format == "png" else raster.save_pgm
    ext = args.format
    for index, record in enumerate(manifest.records):
        try:
            img = raster.load_gray(record.path)
        except (OSError, RoiAugError) as exc:
            errors.append(f"{record.path}: {exc}")
            continue
        mask, _ = tissue.build_tissue_mask(img, cfg.mask)
        record_bank = banks.get(record.image_id)
        if record_bank is None:
            _warn(f"no bank for {record.image_id}; using full-image path")
        elif record_bank.config_hash != expected_hash:
            _warn(f"bank config drift for {record.image_id} "
                  f"({record_bank.config_hash[:12]} != {expected_hash[:12]})")
        stream = UniformStream(cfg.seed, index)
        for k in range(args.n):
            outcome = augment.augment_one(img, mask, record_bank, cfg.sampler, stream)
            save(outcome.image, out_dir / f"{_safe_name(record.image_id)}_{k}.{ext}")
            audit_rows.append(augment.outcome_audit_obj(
                record.image_id, k, outcome, cfg.seed, index))
    augment.write_audit_log(audit_rows, out_dir / "audit.jsonl")
    if errors:
        for err in errors:
            print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


# --- split -------------------------------------------------------------------

def cmd_split(args) -> int:
    cfg = _load_run_config(args)
    manifest = cohort.parse_manifest(args.manifest)
    assignment = cohort.assign_folds(manifest.records, cfg.n_folds, cfg.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cohort.write_fold_file(assignment, out)
    report = cohort.verify_no_leakage(manifest.records,
                                      cohort.read_fold_file(out))
    sizes = [len(assignment.patients_in_fold(f)) for f in range(cfg.n_folds)]
    print(json.dumps({
        "patients": len(assignment.mapping),
        "fold_sizes": sizes,
        "leakage_passed": report.passed,
    }))
    return 0 if report.passed else 1


# --- eval --------------------------------------------------------------------

def _level_report(preds, level, n_boot, seed) -> metrics.MetricReport:
    roc = metrics.roc_auc(preds)
    pr = metrics.pr_auc(preds)
    lo, hi = metrics.bootstrap_ci(preds, "roc_auc", n_boot=n_boot, seed=seed)
    labels = [p.label for p in preds]
    return metrics.MetricReport(roc, pr, lo, hi, sum(labels),
                                len(labels) - sum(labels), level)


def cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    preds = metrics.read_predictions_csv(args.preds)
    levels = {}
    try:
        levels["view"] = _level_report(preds, "view", args.n_boot, cfg.seed)
        for level in ("breast", "patient"):
            agg = metrics.aggregate(preds, level)
            levels[level] = _level_report(agg, level, args.n_boot, cfg.seed)
    except UndefinedMetricError as exc:
        return _fail(f"undefined metric: {exc}")
    report = {
        "spec_version": SPEC_VERSION,
        "n_boot": args.n_boot,
        "seed": cfg.seed,
        "levels": {name: vars(rep) for name, rep in levels.items()},
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        _atomic_write_text(Path(args.out), text)
    print(text, end="")
    return 0


# --- stats -------------------------------------------------------------------

def _parse_folds(raw: str, name: str):
    try:
        values = [float(v) for v in raw.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ValueError(f"{name} must be comma-separated numbers: {raw!r}") from exc
    if len(values) < 2:
        raise ValueError(f"{name} needs at least two fold values")
    return values


def _compare(full, roi):
    full_m, full_sd = metrics.fold_mean_sd(full)
    roi_m, roi_sd = metrics.fold_mean_sd(roi)
    w, p = metrics.wilcoxon_signed_rank(roi, full)
    return {
        "full": {"values": full, "mean": full_m, "sd": full_sd},
        "roi": {"values": roi, "mean": roi_m, "sd": roi_sd},
        "delta": roi_m - full_m,
        "wilcoxon_w": w,
        "wilcoxon_p": p,
    }


def cmd_stats(args) -> int:
    blocks = {"roc_auc": _compare(_parse_folds(args.full_roc, "--full-roc"),
                                  _parse_folds(args.roi_roc, "--roi-roc"))}
    if args.full_pr or args.roi_pr:
        if not (args.full_pr and args.roi_pr):
            return _fail("--full-pr and --roi-pr must be given together")
        blocks["pr_auc"] = _compare(_parse_folds(args.full_pr, "--full-pr"),
                                    _parse_folds(args.roi_pr, "--roi-pr"))
    report = {"spec_version": SPEC_VERSION, "metrics": blocks}
    if args.out:
        _atomic_write_text(Path(args.out),
                           json.dumps(report, indent=2, sort_keys=True) + "\n")

    names = list(blocks)
    header = "method".ljust(14) + "".join(n.ljust(22) for n in names)
    lines = [header]
    for row, key in (("full", "full"), ("roi", "roi")):
        cells = [f"{blocks[n][key]['mean']:.4f} ± {blocks[n][key]['sd']:.4f}"
                 for n in names]
        lines.append(row.ljust(14) + "".join(c.ljust(22) for c in cells))
    lines.append("(roi - full)".ljust(14)
                 + "".join(f"{blocks[n]['delta']:+.4f}".ljust(22) for n in names))
    lines.append("wilcoxon".ljust(14)
                 + "".join(f"W={blocks[n]['wilcoxon_w']:g}, p={blocks[n]['wilcoxon_p']:.4f}"
                           .ljust(22) for n in names))
    print("\n".join(lines))
    return 0


# --- viz ---------------------------------------------------------------------

def cmd_viz(args) -> int:
    cfg = _load_run_config(args)
    img = raster.load_gray(args.image)
    banks = bank.read_banks(args.bank)
    if args.id is not None:
        matches = [b for b in banks if b.image_id == args.id]
        if not matches:
            return _fail(f"no bank entry with image_id {args.id!r}")
        entry = matches[0]
    elif len(banks) == 1:
        entry = banks[0]
    else:
        return _fail("bank file has multiple entries; use --id")
    h, w = img.shape
    if (entry.source_w, entry.source_h) != (w, h):
        return _fail(f"bank {entry.image_id!r} is for {entry.source_w}x{entry.source_h}, "
                     f"image is {w}x{h}")

    canvas = Image.fromarray(np.rint(img * 255.0).astype(np.uint8), mode="L").convert("RGB")
    draw = ImageDraw.Draw(canvas)
    if entry.maskless:
        _warn(f"{entry.image_id}: maskless bank, nothing to draw")
    for rank, sb in enumerate(entry.boxes, start=1):
        rect = bank.box_pixel_rect(sb.box, w, h)
        x0, y0 = rect.x0, rect.y0
        x1, y1 = rect.x0 + rect.w - 1, rect.y0 + rect.h - 1
        for off in range(3):
            draw.rectangle([x0 + off, y0 + off, x1 - off, y1 - off], outline=(255, 48, 48))
        draw.text((x0 + 5, y0 + 5), f"{rank}:{sb.score:.3f}", fill=(255, 220, 0))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(out)

    if args.mask_out or args.saliency_out:
        mask, _ = tissue.build_tissue_mask(img, cfg.mask)
        if args.mask_out:
            raster.save_pgm(mask.astype(np.float64), args.mask_out)
        if args.saliency_out:
            s_map = compute_saliency(img, mask, cfg.saliency)
            raster.save_pgm(s_map, args.saliency_out, maxval=65535)
    return 0


# --- parser ------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="TOML config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roiaug",
        description="ROI bank generation, crop augmentation and evaluation statistics")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bank", help="generate ROI banks for a manifest")
    _add_common(p)
    p.add_argument("manifest", help="dataset directory or manifest TSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--fold-file", default=None, help="patient fold TSV")
    p.add_argument("--fold", type=int, default=None,
                   help="validation fold to exclude (training split only)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--export-masks", action="store_true")
    p.set_defaults(func=cmd_bank)

    p = sub.add_parser("sample", help="emit augmented images plus an audit log")
    _add_common(p)
    p.add_argument("manifest")
    p.add_argument("--banks", required=True, help="bank JSON-lines file")
    p.add_argument("--n", type=int, default=1, help="samples per image")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("pgm", "png"), default="pgm")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("split", help="write a patient-level fold file")
    _add_common(p)
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="fold TSV path")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("eval", help="metric report from a predictions CSV")
    _add_common(p)
    p.add_argument("preds", help="predictions CSV")
    p.add_argument("--n-boot", type=int, default=1000)
    p.add_argument("--out", default=None, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="fold-wise comparison of two methods")
    p.add_argument("--full-roc", required=True, help="comma-separated fold values")
    p.add_argument("--roi-roc", required=True)
    p.add_argument("--full-pr", default=None)
    p.add_argument("--roi-pr", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("viz", help="overlay bank boxes on an image")
    _add_common(p)
    p.add_argument("image")
    p.add_argument("--bank", required=True)
    p.add_argument("--id", default=None, help="image_id within the bank file")
    p.add_argument("--out", required=True, help="overlay PNG path")
    p.add_argument("--mask-out", default=None, help="export tissue mask as PGM")
    p.add_argument("--saliency-out", default=None, help="export saliency as 16-bit PGM")
    p.set_defaults(func=cmd_viz)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RoiAugError, ValueError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
