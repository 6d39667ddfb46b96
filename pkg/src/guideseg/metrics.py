"""Pixel-classification metrics: confusion, mIoU, guide quality, PR curves, mP.

Ground-truth ignore pixels (255) never count. Predicted ignore pixels are
"no prediction": they are left out of every precision denominator but a
ground-truth pixel predicted as ignore still counts as missed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import UndefinedResultError, UsageError
from .maskcore import BACKGROUND, IGNORE, check_label_mask, check_same_shape
from .seeder import seeds_at_thresholds

FG_RECALL_TARGET = 0.20
BG_RECALL_TARGET = 0.80


@dataclass
class ConfusionMatrix:
    """``counts[g, p]`` for ground truth ``g`` and prediction ``p`` in 0..C.

    ``ignored[g]`` counts ground-truth-``g`` pixels predicted as ignore.
    """

    counts: np.ndarray
    ignored: np.ndarray = field(default=None)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = self.counts.shape[0]
        if self.counts.shape != (k, k):
            raise UsageError(f"confusion counts must be square, got {self.counts.shape}")
        if self.ignored is None:
            self.ignored = np.zeros(k, dtype=np.int64)
        self.ignored = np.asarray(self.ignored, dtype=np.int64)

    @classmethod
    def zeros(cls, n_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((n_classes + 1, n_classes + 1), dtype=np.int64))

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0] - 1

    @property
    def total(self) -> int:
        return int(self.counts.sum() + self.ignored.sum())

    def gt_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1) + self.ignored

    def pred_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.counts.shape != other.counts.shape:
            raise UsageError("cannot add confusion matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts, self.ignored + other.ignored)

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self.counts, other.counts) and np.array_equal(self.ignored, other.ignored)


def confusion(gt, pred, n_classes: int = 20, *, allow_pred_ignore: bool = False) -> ConfusionMatrix:
    """Confusion over pixels whose ground truth is not ignore."""
    g = check_label_mask(gt, n_classes=n_classes)
    p = check_label_mask(pred, n_classes=n_classes, allow_ignore=allow_pred_ignore)
    check_same_shape(gt=g.shape, pred=p.shape)
    k = n_classes + 1
    valid = g != IGNORE
    g = g[valid].astype(np.int64)
    p = p[valid].astype(np.int64)
    skipped = p == IGNORE
    counts = np.bincount(g[~skipped] * k + p[~skipped], minlength=k * k).reshape(k, k)
    ignored = np.bincount(g[skipped], minlength=k)
    return ConfusionMatrix(counts, ignored)


def miou(cm: ConfusionMatrix) -> tuple[list, float]:
    """Per-class IoU (``None`` where undefined) and their mean over defined classes."""
    tp = np.diag(cm.counts).astype(np.float64)
    denom = cm.gt_totals() + cm.pred_totals() - np.diag(cm.counts)
    ious = [float(t / d) if d > 0 else None for t, d in zip(tp, denom)]
    defined = [v for v in ious if v is not None]
    if not defined:
        raise UndefinedResultError("no class has ground-truth or predicted pixels")
    return ious, float(np.mean(defined))


class GuideQuality(NamedTuple):
    fg_precision: float | None
    fg_recall: float | None
    bg_precision: float | None
    bg_recall: float | None


def quality_from_confusion(cm: ConfusionMatrix) -> GuideQuality:
    """Foreground P/R averaged over classes present in the ground truth; background as one class."""
    tp = np.diag(cm.counts)
    gt_tot = cm.gt_totals()
    pred_tot = cm.pred_totals()
    precisions, recalls = [], []
    for c in range(1, cm.n_classes + 1):
        if gt_tot[c] == 0:
            continue
        recalls.append(tp[c] / gt_tot[c])
        if pred_tot[c] > 0:
            precisions.append(tp[c] / pred_tot[c])
    fg_p = float(np.mean(precisions)) if precisions else None
    fg_r = float(np.mean(recalls)) if recalls else None
    bg_p = float(tp[BACKGROUND] / pred_tot[BACKGROUND]) if pred_tot[BACKGROUND] else None
    bg_r = float(tp[BACKGROUND] / gt_tot[BACKGROUND]) if gt_tot[BACKGROUND] else None
    return GuideQuality(fg_p, fg_r, bg_p, bg_r)


def guide_quality(gt, guide, n_classes: int = 20) -> GuideQuality:
    return quality_from_confusion(confusion(gt, guide, n_classes, allow_pred_ignore=True))


@dataclass(frozen=True)
class PrCurve:
    """Precision/recall sampled at strictly descending thresholds.

    ``precision[i]`` is ``None`` where nothing was predicted at ``taus[i]``.
    ``cls`` is a class index, ``"background"`` or ``"foreground"`` (the
    pointwise mean over foreground classes).
    """

    cls: object
    taus: tuple
    precision: tuple
    recall: tuple

    def points(self):
        return list(zip(self.taus, self.precision, self.recall))

    def to_dict(self) -> dict:
        return {
            "class": self.cls,
            "points": [{"tau": t, "precision": p, "recall": r} for t, p, r in self.points()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PrCurve":
        pts = d["points"]
        return cls(
            d["class"],
            tuple(float(p["tau"]) for p in pts),
            tuple(None if p["precision"] is None else float(p["precision"]) for p in pts),
            tuple(None if p["recall"] is None else float(p["recall"]) for p in pts),
        )


@dataclass(frozen=True)
class PrSweep:
    per_class: dict  # class index -> PrCurve, for classes present in the ground truth
    foreground: PrCurve
    background: PrCurve


def _ratio(num, den):
    return float(num / den) if den > 0 else None


def pr_sweep(dataset: Iterable, taus: Sequence[float], n_classes: int | None = None) -> PrSweep:
    """Seed precision/recall over a dataset of ``(scores, labels, gt)`` triples.

    Seeds are extracted without label restriction. Counts are pooled over the
    dataset per class, then the foreground curve averages the per-class
    values at each threshold.
    """
    taus = tuple(float(t) for t in taus)
    cms = None
    for scores, labels, gt in dataset:
        scores = np.asarray(scores)
        c = scores.shape[0] if n_classes is None else n_classes
        if cms is None:
            n_classes = c
            cms = [ConfusionMatrix.zeros(c) for _ in taus]
        masks = seeds_at_thresholds(scores, labels, taus, restrict_to_image_labels=False)
        for i, m in enumerate(masks):
            cms[i] = cms[i] + confusion(gt, m, n_classes)
    if cms is None:
        raise UsageError("pr_sweep needs a non-empty dataset")

    gt_tot = cms[0].gt_totals()
    present = [c for c in range(1, n_classes + 1) if gt_tot[c] > 0]
    per_class = {}
    for c in present:
        prec = tuple(_ratio(cm.counts[c, c], cm.pred_totals()[c]) for cm in cms)
        rec = tuple(_ratio(cm.counts[c, c], gt_tot[c]) for cm in cms)
        per_class[c] = PrCurve(c, taus, prec, rec)

    fg_prec, fg_rec = [], []
    for i in range(len(taus)):
        ps = [per_class[c].precision[i] for c in present if per_class[c].precision[i] is not None]
        rs = [per_class[c].recall[i] for c in present]
        fg_prec.append(float(np.mean(ps)) if ps else None)
        fg_rec.append(float(np.mean(rs)) if rs else None)
    foreground = PrCurve("foreground", taus, tuple(fg_prec), tuple(fg_rec))

    bg = BACKGROUND
    background = PrCurve(
        "background",
        taus,
        tuple(_ratio(cm.counts[bg, bg], cm.pred_totals()[bg]) for cm in cms),
        tuple(_ratio(cm.counts[bg, bg], gt_tot[bg]) for cm in cms),
    )
    return PrSweep(per_class, foreground, background)


def precision_at_recall(curve: PrCurve, target_recall: float) -> float:
    """Linearly interpolated precision at ``target_recall``.

    Points without a defined precision are skipped. Targets outside the
    sampled recall range are clamped to the nearest end point. When the
    target hits a sampled recall exactly, the first such point wins.
    """
    if not 0.0 <= target_recall <= 1.0:
        raise UsageError(f"target recall must lie in [0, 1], got {target_recall}")
    pts = [(r, p) for _, p, r in curve.points() if p is not None and r is not None]
    if not pts:
        raise UndefinedResultError(f"curve {curve.cls!r} has no point with defined precision")
    pts.sort(key=lambda rp: rp[0])
    for r, p in pts:
        if r == target_recall:
            return p
    if target_recall < pts[0][0]:
        return pts[0][1]
    if target_recall > pts[-1][0]:
        return pts[-1][1]
    lo = max(i for i, (r, _) in enumerate(pts) if r < target_recall)
    hi = min(i for i, (r, _) in enumerate(pts) if r > target_recall)
    (r0, p0), (r1, p1) = pts[lo], pts[hi]
    return p0 + (p1 - p0) * (target_recall - r0) / (r1 - r0)


def mp(fg_curve: PrCurve, bg_curve: PrCurve) -> float:
    """Mean of foreground precision at 20% recall and background precision at 80% recall."""
    return 0.5 * (precision_at_recall(fg_curve, FG_RECALL_TARGET) + precision_at_recall(bg_curve, BG_RECALL_TARGET))
