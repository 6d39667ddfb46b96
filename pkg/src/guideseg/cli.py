"""Command line interface: ``guideseg <subcommand> ...``.

Exit codes: 0 success, 1 some manifest records failed, 2 usage or format error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

from .densecrf import PRESETS, SEED_CONFIDENCE, CrfParams, crf_postproc, crf_seed
from .errors import GuideSegError, UsageError
from .fixtures import NOISY_SCENE, write_fixture_set
from .guides import DEFAULT_AREA_FRACTION, guide_g0, guide_g1, guide_g2
from .io import (
    read_image,
    read_label_mask,
    read_saliency,
    read_score_map,
    write_binary_mask,
    write_image,
    write_label_mask,
)
from .maskcore import normalize_scores
from .metrics import (
    BG_RECALL_TARGET,
    FG_RECALL_TARGET,
    PrCurve,
    confusion,
    miou,
    mp,
    pr_sweep,
    precision_at_recall,
    quality_from_confusion,
)
from .pipeline import RunConfig, load_g1_scores, load_manifest, run_manifest, tomllib
from .regions import filter_by_area, label_components
from .seeder import extract_seeds

DEFAULT_TAUS = tuple(round(1.0 - i / 100, 2) for i in range(101))


def _labels(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"labels must be comma-separated integers, got {text!r}") from None


def _taus(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"taus must be comma-separated numbers, got {text!r}") from None


def _add_crf_args(p):
    p.add_argument("--preset", choices=sorted(PRESETS), default="v2")
    p.add_argument("--crf-config", help="TOML file with a [crf] table of custom parameters")
    p.add_argument("--iterations", type=int)
    p.add_argument("--approx", action="store_true", help="truncated-kernel inference for large inputs")


def _crf_params(args) -> CrfParams:
    overrides = {}
    if args.crf_config:
        with open(args.crf_config, "rb") as f:
            overrides.update(tomllib.load(f).get("crf", {}))
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    return CrfParams.preset(args.preset, **overrides)


def cmd_seed(args):
    scores = normalize_scores(read_score_map(args.heatmap))
    seeds = extract_seeds(scores, args.labels, tau=args.tau, restrict_to_image_labels=not args.no_restrict)
    write_label_mask(seeds, args.out)
    return 0


def cmd_fuse(args):
    saliency = read_saliency(args.saliency)
    if args.strategy == "g0":
        res = guide_g0(saliency, args.labels, args.rng_seed, position=args.position)
    elif args.strategy == "g1":
        if not args.g1_scores or not args.image_id:
            raise UsageError("--strategy g1 needs --g1-scores and --image-id")
        scores = load_g1_scores(args.g1_scores)
        if args.image_id not in scores:
            raise UsageError(f"no G1 scores for image {args.image_id!r}")
        fg = filter_by_area(label_components(saliency, args.connectivity), args.area_fraction)
        res = guide_g1(fg, args.labels, scores[args.image_id])
    else:
        if not args.seeds or not args.image:
            raise UsageError("--strategy g2 needs --seeds and --image")
        res = guide_g2(read_label_mask(args.seeds, n_classes=None), saliency, read_image(args.image),
                       _crf_params(args), args.connectivity, area_fraction=args.area_fraction, approx=args.approx)
    write_label_mask(res.mask, args.out)
    if args.stats:
        print(json.dumps({str(k): v for k, v in res.stats.items()}, sort_keys=True))
    return 0


def cmd_crf(args):
    params = _crf_params(args)
    image = read_image(args.image)
    if args.stage == "seed":
        if not args.seeds:
            raise UsageError("crf seed needs --seeds")
        out = crf_seed(read_label_mask(args.seeds, n_classes=None), image, params, args.confidence,
                       labels=args.labels or (), approx=args.approx)
    else:
        if not args.probs:
            raise UsageError("crf postproc needs --probs")
        out = crf_postproc(read_score_map(args.probs), image, params, approx=args.approx)
    write_label_mask(out, args.out)
    return 0


def cmd_export_components(args):
    saliency = read_saliency(args.saliency)
    image = read_image(args.image)
    fg = filter_by_area(label_components(saliency, args.connectivity), args.area_fraction)
    mask_dir = os.path.join(args.out_dir, "masks")
    image_dir = os.path.join(args.out_dir, "images")
    os.makedirs(mask_dir, exist_ok=True)
    os.makedirs(image_dir, exist_ok=True)
    for rec in fg.records:
        comp = fg.mask(rec.id)
        name = f"{args.image_id}.c{rec.id}.png"
        write_binary_mask(comp, os.path.join(mask_dir, name))
        write_image(image * comp[:, :, None], os.path.join(image_dir, name))
    print(json.dumps({"image_id": args.image_id, "components": [
        {"id": r.id, "area": r.area, "bbox": list(r.bbox)} for r in fg.records]}, sort_keys=True))
    return 0


def _dataset(records):
    for rec in records:
        if not rec.gt:
            continue
        scores = normalize_scores(read_score_map(rec.heatmap))
        yield scores, rec.labels, read_label_mask(rec.gt, n_classes=scores.shape[0])


def _curves_json(sweep) -> dict:
    return {
        "foreground": sweep.foreground.to_dict(),
        "background": sweep.background.to_dict(),
        "per_class": [c.to_dict() for c in sweep.per_class.values()],
    }


def _write_csv(path, curves):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["tau", "precision", "recall", "class"])
        for curve in curves:
            for tau, p, r in curve.points():
                w.writerow([tau, "" if p is None else p, "" if r is None else r, curve.cls])


def _emit(obj, path):
    text = json.dumps(obj, indent=1, sort_keys=True)
    if path:
        with open(path, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def _mp_entry(fg, bg):
    try:
        return {
            "mp": mp(fg, bg),
            "fg_precision_at_20": precision_at_recall(fg, FG_RECALL_TARGET),
            "bg_precision_at_80": precision_at_recall(bg, BG_RECALL_TARGET),
        }
    except GuideSegError as exc:
        return {"mp": None, "error": str(exc)}


def cmd_prcurve(args):
    sweep = pr_sweep(_dataset(load_manifest(args.manifest)), args.taus)
    _emit(_curves_json(sweep), args.out)
    if args.csv:
        _write_csv(args.csv, [sweep.foreground, sweep.background, *sweep.per_class.values()])
    return 0


def cmd_mp(args):
    with open(args.curves) as f:
        data = json.load(f)
    fg = PrCurve.from_dict(data["foreground"])
    bg = PrCurve.from_dict(data["background"])
    print(json.dumps(_mp_entry(fg, bg), sort_keys=True))
    return 0


def cmd_eval(args):
    records = load_manifest(args.manifest)
    report = {}
    with_gt = [r for r in records if r.gt]
    if with_gt:
        sweep = pr_sweep(_dataset(with_gt), args.taus)
        report["pr_curves"] = _curves_json(sweep)
        report.update(_mp_entry(sweep.foreground, sweep.background))
        if args.csv:
            _write_csv(args.csv, [sweep.foreground, sweep.background, *sweep.per_class.values()])
    if args.pred_dir and with_gt:
        total = None
        for rec in with_gt:
            n_classes = read_score_map(rec.heatmap).shape[0]
            gt = read_label_mask(rec.gt, n_classes=n_classes)
            pred = read_label_mask(os.path.join(args.pred_dir, f"{rec.id}.png"), n_classes=n_classes)
            cm = confusion(gt, pred, n_classes, allow_pred_ignore=True)
            total = cm if total is None else total + cm
        per_class, mean = miou(total)
        report["iou"] = {"per_class": per_class, "mean": mean}
        report["guide_quality"] = quality_from_confusion(total)._asdict()
    _emit(report, args.out)
    return 0


def cmd_run(args):
    cfg = RunConfig.from_toml(args.config) if args.config else RunConfig()
    records = load_manifest(args.manifest)
    report = run_manifest(records, cfg, workers=args.workers, strict=args.strict, output_dir=args.out_dir)
    summary = {k: report[k] for k in ("n_records", "n_succeeded", "guide_quality")}
    summary["failures"] = len(report["failures"])
    print(json.dumps(summary, sort_keys=True))
    return 1 if report["failures"] else 0


def cmd_fixtures(args):
    spec = replace(NOISY_SCENE, height=args.size, width=args.size, n_classes=args.classes, n_blobs=args.blobs,
                   blur_radius=args.blur, noise_amplitude=args.noise, seed_coverage=args.seed_coverage,
                   distractors=args.distractors)
    path = write_fixture_set(args.out, args.count, args.seed, spec)
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guideseg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("seed", help="threshold a heatmap into a seed mask")
    p.add_argument("--heatmap", required=True)
    p.add_argument("--labels", type=_labels, help="image-level labels, e.g. 1,15")
    p.add_argument("--tau", type=float, default=0.2)
    p.add_argument("--no-restrict", action="store_true", help="consider every class, not just the image labels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_seed)

    p = sub.add_parser("fuse", help="build a guide mask with G0, G1 or G2")
    p.add_argument("--strategy", choices=("g0", "g1", "g2"), required=True)
    p.add_argument("--saliency", required=True, help="SGSM probability map or 0/255 PNG")
    p.add_argument("--labels", type=_labels, required=True)
    p.add_argument("--seeds")
    p.add_argument("--image")
    p.add_argument("--g1-scores")
    p.add_argument("--image-id")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--position", type=int, default=0)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p.add_argument("--area-fraction", type=float, default=DEFAULT_AREA_FRACTION)
    p.add_argument("--stats", action="store_true", help="print per-label pixel counts")
    p.add_argument("--out", required=True)
    _add_crf_args(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("crf", help="dense CRF on seeds or on probability maps")
    p.add_argument("stage", choices=("seed", "postproc"))
    p.add_argument("--image", required=True)
    p.add_argument("--seeds")
    p.add_argument("--probs", help="SGSM map of per-label probabilities")
    p.add_argument("--labels", type=_labels)
    p.add_argument("--confidence", type=float, default=SEED_CONFIDENCE)
    p.add_argument("--out", required=True)
    _add_crf_args(p)
    p.set_defaults(func=cmd_crf)

    p = sub.add_parser("export-components", help="write each salient component as a mask and a masked image")
    p.add_argument("--saliency", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--image-id", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p.add_argument("--area-fraction", type=float, default=DEFAULT_AREA_FRACTION)
    p.set_defaults(func=cmd_export_components)

    p = sub.add_parser("eval", help="PR curves, mP and (with --pred-dir) mIoU / guide quality")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred-dir")
    p.add_argument("--taus", type=_taus, default=DEFAULT_TAUS)
    p.add_argument("--out")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("prcurve", help="seed precision-recall curves over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--taus", type=_taus, default=DEFAULT_TAUS)
    p.add_argument("--out")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_prcurve)

    p = sub.add_parser("mp", help="mP from a prcurve JSON file")
    p.add_argument("--curves", required=True)
    p.set_defaults(func=cmd_mp)

    p = sub.add_parser("run", help="process a whole manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--strict", action="store_true", help="abort on the first failing record")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fixtures", help="synthetic fixture sets")
    fsub = p.add_subparsers(dest="fixtures_command", required=True)
    g = fsub.add_parser("generate")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--blobs", type=int, default=3)
    g.add_argument("--blur", type=int, default=NOISY_SCENE.blur_radius)
    g.add_argument("--noise", type=float, default=NOISY_SCENE.noise_amplitude)
    g.add_argument("--seed-coverage", type=float, default=NOISY_SCENE.seed_coverage)
    g.add_argument("--distractors", type=int, default=1)
    g.set_defaults(func=cmd_fixtures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (GuideSegError, FileNotFoundError, tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        print(f"guideseg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
