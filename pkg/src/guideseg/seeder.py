"""Threshold-and-argmax seed extraction from normalised class heatmaps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, UsageError
from .maskcore import BACKGROUND, check_labels, check_score_map

NORMALIZED_TOLERANCE = 1e-6


@dataclass(frozen=True)
class SeederConfig:
    tau: float = 0.2
    restrict_to_image_labels: bool = True

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise UsageError(f"tau must lie in [0, 1], got {self.tau}")


def _considered_scores(scores, labels, restrict: bool) -> np.ndarray:
    arr = check_score_map(scores)
    if np.any(arr > 1.0 + NORMALIZED_TOLERANCE):
        raise DataError("scores are not normalised (a value exceeds 1); run normalize_scores first")
    arr = arr.astype(np.float64)
    if restrict:
        present = check_labels(labels, arr.shape[0])
        keep = np.zeros(arr.shape[0], dtype=bool)
        keep[[c - 1 for c in present]] = True
        arr = np.where(keep[:, None, None], arr, -np.inf)
    elif labels is not None:
        check_labels(labels, arr.shape[0], allow_empty=True)
    return arr


def _seeds_from_considered(arr: np.ndarray, tau: float) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    winner = np.argmax(arr, axis=0)
    best = np.take_along_axis(arr, winner[None], axis=0)[0]
    out = (winner + 1).astype(np.uint8)
    out[best < tau] = BACKGROUND
    return out


def extract_seeds(
    scores,
    labels: Iterable[int] | None = None,
    cfg: SeederConfig | None = None,
    *,
    tau: float | None = None,
    restrict_to_image_labels: bool | None = None,
) -> np.ndarray:
    """Seed label mask from a normalised ``(C, H, W)`` score map.

    A pixel is background when every considered channel scores strictly below
    ``tau``; otherwise it takes the argmax class (1-based). With label
    restriction on, only channels of ``labels`` are considered.

    Keyword overrides ``tau`` / ``restrict_to_image_labels`` take precedence
    over ``cfg``.
    """
    cfg = cfg or SeederConfig()
    if tau is not None or restrict_to_image_labels is not None:
        cfg = SeederConfig(
            tau=cfg.tau if tau is None else tau,
            restrict_to_image_labels=(
                cfg.restrict_to_image_labels if restrict_to_image_labels is None else restrict_to_image_labels
            ),
        )
    if cfg.restrict_to_image_labels and labels is None:
        raise UsageError("image labels are required when restrict_to_image_labels is on")
    arr = _considered_scores(scores, labels, cfg.restrict_to_image_labels)
    return _seeds_from_considered(arr, cfg.tau)


def seeds_at_thresholds(
    scores,
    labels: Iterable[int] | None,
    taus: Sequence[float],
    *,
    restrict_to_image_labels: bool = True,
) -> list[np.ndarray]:
    """One seed mask per threshold; ``taus`` must be strictly descending."""
    taus = [float(t) for t in taus]
    if not taus:
        raise UsageError("at least one threshold is required")
    if any(a <= b for a, b in zip(taus, taus[1:])):
        raise UsageError("thresholds must be sorted strictly descending")
    for t in taus:
        SeederConfig(tau=t)
    if restrict_to_image_labels and labels is None:
        raise UsageError("image labels are required when restrict_to_image_labels is on")
    arr = _considered_scores(scores, labels, restrict_to_image_labels)
    return [_seeds_from_considered(arr, t) for t in taus]
