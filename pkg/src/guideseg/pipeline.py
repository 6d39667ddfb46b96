"""Manifest handling and per-image orchestration.

A manifest is JSON Lines, one record per image::

    {"id": "2007_000032", "image": "img.png", "heatmap": "h.sgsm",
     "saliency": "s.sgsm", "labels": [1, 15], "gt": "gt.png"}

Relative paths resolve against the manifest's directory. Records are
independent, so a run fans them out over a bounded thread pool and merges the
results in manifest order; the output never depends on the worker count.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .densecrf import PRESETS, SEED_CONFIDENCE, CrfParams, label_probs, crf_postproc, crf_seed
from .errors import FormatError, GuideSegError, UsageError
from .guides import DEFAULT_AREA_FRACTION, GuideResult, guide_g0, guide_g1, guide_g2
from .io import read_image, read_label_mask, read_saliency, read_score_map, write_label_mask
from .maskcore import BACKGROUND, IGNORE, check_labels, check_same_shape, normalize_scores
from .metrics import ConfusionMatrix, confusion, miou, quality_from_confusion
from .regions import filter_by_area, label_components
from .seeder import extract_seeds

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

STRATEGIES = ("seeds-only", "g0", "g1", "g2")
CRF_STAGES = ("seed", "postproc")
THREADS_ENV = "GUIDESEG_THREADS"


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    image: str
    heatmap: str
    saliency: str
    labels: tuple
    gt: str | None = None
    position: int = 0


def parse_manifest(lines, base_dir: str = ".") -> list[ManifestRecord]:
    records, seen = [], set()
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest line {lineno}: {exc}") from exc
        missing = [k for k in ("id", "image", "heatmap", "saliency", "labels") if k not in obj]
        if missing:
            raise FormatError(f"manifest line {lineno}: missing fields {missing}")
        rid = str(obj["id"])
        if rid in seen:
            raise FormatError(f"manifest line {lineno}: duplicate id {rid!r}")
        seen.add(rid)

        def resolve(p):
            return p if p is None or os.path.isabs(p) else os.path.join(base_dir, p)

        records.append(
            ManifestRecord(
                id=rid,
                image=resolve(obj["image"]),
                heatmap=resolve(obj["heatmap"]),
                saliency=resolve(obj["saliency"]),
                labels=tuple(sorted(int(c) for c in obj["labels"])),
                gt=resolve(obj.get("gt")),
                position=len(records),
            )
        )
    return records


def load_manifest(path) -> list[ManifestRecord]:
    with open(path) as f:
        return parse_manifest(f, os.path.dirname(os.path.abspath(path)))


@dataclass(frozen=True)
class RunConfig:
    strategy: str = "g2"
    tau: float = 0.2
    crf_preset: str = "v2"
    crf: CrfParams | None = None  # custom parameters; overrides the preset
    crf_stages: tuple = ()
    crf_approx: bool = False
    seed_confidence: float = SEED_CONFIDENCE
    rng_seed: int = 0
    connectivity: int = 8
    area_fraction: float = DEFAULT_AREA_FRACTION
    output_dir: str = "guides"
    g1_scores: str | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise UsageError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if not 0.0 <= self.tau <= 1.0:
            raise UsageError(f"tau must lie in [0, 1], got {self.tau}")
        object.__setattr__(self, "crf_stages", tuple(self.crf_stages))
        bad = set(self.crf_stages) - set(CRF_STAGES)
        if bad:
            raise UsageError(f"unknown CRF stages {sorted(bad)}; choose from {CRF_STAGES}")
        if self.crf is None and self.crf_preset not in PRESETS:
            raise UsageError(f"unknown CRF preset {self.crf_preset!r}")
        if self.connectivity not in (4, 8):
            raise UsageError("connectivity must be 4 or 8")
        if not 0.0 <= self.area_fraction <= 1.0:
            raise UsageError("area_fraction must lie in [0, 1]")
        if self.rng_seed < 0:
            raise UsageError("rng_seed must be non-negative")
        if self.strategy == "g1" and not self.g1_scores:
            raise UsageError("strategy g1 requires a g1_scores file")

    @property
    def crf_params(self) -> CrfParams:
        return self.crf if self.crf is not None else PRESETS[self.crf_preset]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        if isinstance(d.get("crf"), dict):
            crf = d["crf"]
            d["crf"] = CrfParams.preset(d.get("crf_preset", "v2"), **crf)
        return cls(**d)

    @classmethod
    def from_toml(cls, path) -> "RunConfig":
        with open(path, "rb") as f:
            try:
                data = tomllib.load(f)
            except tomllib.TOMLDecodeError as exc:
                raise FormatError(f"{path}: {exc}") from exc
        return cls.from_dict(data)


class RecordError(GuideSegError):
    def __init__(self, record_id: str, cause: Exception):
        super().__init__(f"{record_id}: {cause}")
        self.record_id = record_id
        self.cause = cause


def refine_guide(mask, image, params: CrfParams, confidence: float = SEED_CONFIDENCE, approx: bool = False):
    """CRF post-processing of a guide mask; ignore pixels stay ignore."""
    present = sorted({int(v) for v in np.unique(mask)} - {IGNORE})
    label_set = sorted(set(present) | {BACKGROUND})
    if len(label_set) < 2:
        return mask.copy()
    idx = crf_postproc(label_probs(mask, label_set, confidence), image, params, approx=approx)
    out = np.asarray(label_set, dtype=np.uint8)[idx]
    out[mask == IGNORE] = IGNORE
    return out


def load_g1_scores(path) -> dict:
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc


def run_image(record: ManifestRecord, cfg: RunConfig, g1_scores: dict | None = None) -> GuideResult:
    """normalise -> seeds -> (crf-seed) -> strategy -> (crf-postproc)."""
    return _run_image(record, cfg, g1_scores)[0]


def _run_image(record, cfg, g1_scores):
    scores = read_score_map(record.heatmap)
    n_classes = scores.shape[0]
    labels = check_labels(record.labels, n_classes)
    image = read_image(record.image)
    saliency = read_saliency(record.saliency)
    check_same_shape(heatmap=scores.shape[1:], image=image.shape, saliency=saliency.shape)
    params = cfg.crf_params

    seeds = extract_seeds(normalize_scores(scores), labels, tau=cfg.tau)
    if "seed" in cfg.crf_stages:
        seeds = crf_seed(seeds, image, params, cfg.seed_confidence, labels=labels, approx=cfg.crf_approx)

    if cfg.strategy == "seeds-only":
        mask = seeds
    elif cfg.strategy == "g0":
        mask = guide_g0(saliency, labels, cfg.rng_seed, position=record.position).mask
    elif cfg.strategy == "g1":
        if g1_scores is None or record.id not in g1_scores:
            raise UsageError(f"no G1 scores for image {record.id!r}")
        fg = filter_by_area(label_components(saliency, cfg.connectivity), cfg.area_fraction)
        mask = guide_g1(fg, labels, g1_scores[record.id]).mask
    else:
        mask = guide_g2(seeds, saliency, image, params, cfg.connectivity,
                        area_fraction=cfg.area_fraction, approx=cfg.crf_approx).mask

    if "postproc" in cfg.crf_stages:
        mask = refine_guide(mask, image, params, cfg.seed_confidence, approx=cfg.crf_approx)
    return GuideResult.from_mask(mask), n_classes


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        return max(1, n)
    return max(1, os.cpu_count() or 1)


@dataclass
class _Outcome:
    record: ManifestRecord
    result: GuideResult | None = None
    cm: ConfusionMatrix | None = None
    n_classes: int = 0
    error: str | None = None


def _process(record, cfg, g1, out_dir, strict) -> _Outcome:
    try:
        res, n_classes = _run_image(record, cfg, g1)
        write_label_mask(res.mask, os.path.join(out_dir, f"{record.id}.png"))
        cm = None
        if record.gt:
            gt = read_label_mask(record.gt, n_classes=n_classes)
            cm = confusion(gt, res.mask, n_classes, allow_pred_ignore=True)
        return _Outcome(record, res, cm, n_classes)
    except (GuideSegError, OSError) as exc:
        if strict:
            raise RecordError(record.id, exc) from exc
        log.warning("record %s failed: %s", record.id, exc)
        return _Outcome(record, error=str(exc))


def _quality_dict(q):
    return None if q is None else q._asdict()


def run_manifest(records, cfg: RunConfig, *, workers: int | None = None, strict: bool = False,
                 output_dir: str | None = None) -> dict:
    """Process every record, write guide masks and ``report.json``; return the report.

    Failed records are listed under ``"failures"`` unless ``strict`` is set,
    in which case the first failure raises :class:`RecordError`.
    """
    out_dir = output_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    g1 = load_g1_scores(cfg.g1_scores) if cfg.strategy == "g1" else None
    workers = workers or default_workers()
    if workers == 1 or len(records) <= 1:
        outcomes = [_process(r, cfg, g1, out_dir, strict) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda r: _process(r, cfg, g1, out_dir, strict), records))

    report = build_report(outcomes, cfg)
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)
        f.write("\n")
    return report


def build_report(outcomes, cfg: RunConfig) -> dict:
    per_record, failures = [], []
    total = None
    for o in outcomes:
        if o.error is not None:
            failures.append({"id": o.record.id, "error": o.error})
            continue
        entry = {"id": o.record.id, "stats": {str(k): v for k, v in o.result.stats.items()}}
        if o.cm is not None:
            entry["guide_quality"] = _quality_dict(quality_from_confusion(o.cm))
            if total is None:
                total = o.cm
            elif total.counts.shape == o.cm.counts.shape:
                total = total + o.cm
            else:
                failures.append({"id": o.record.id, "error": "class count differs from earlier records"})
                continue
        per_record.append(entry)

    report = {
        "strategy": cfg.strategy,
        "n_records": len(outcomes),
        "n_succeeded": len(per_record),
        "failures": failures,
        "records": per_record,
        "guide_quality": None,
        "iou": None,
    }
    if total is not None:
        report["guide_quality"] = _quality_dict(quality_from_confusion(total))
        try:
            per_class, mean = miou(total)
            report["iou"] = {"per_class": per_class, "mean": mean,
                             "note": "classes without ground-truth or predicted pixels are excluded from the mean"}
        except GuideSegError:
            pass
        report["confusion"] = {"counts": total.counts.tolist(), "ignored": total.ignored.tolist()}
    return report
