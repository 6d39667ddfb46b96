"""Guide labelling strategies fusing saliency, seeds and image-level labels.

* G0 -- every salient pixel gets one class drawn at random from the image labels.
* G1 -- every salient component gets the image label whose classifier score
  rises most when the rest of the image is zeroed out.
* G2 -- seeds are propagated through the salient components they touch.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable, Mapping

import numpy as np

from .densecrf import PRESETS, CrfParams, region_crf
from .errors import DataError, UsageError
from .maskcore import (
    BACKGROUND,
    IGNORE,
    check_binary_mask,
    check_image,
    check_label_mask,
    check_labels,
    check_same_shape,
)
from .regions import ComponentSet, filter_by_area, intersect, label_components, label_seed_components

DEFAULT_AREA_FRACTION = 0.01

RegionSolver = Callable[[np.ndarray, np.ndarray, frozenset, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GuideResult:
    mask: np.ndarray
    stats: dict  # label value -> pixel count; background and ignore always present

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "GuideResult":
        counts = np.bincount(mask.ravel(), minlength=256)
        stats = {int(v): int(counts[v]) for v in np.flatnonzero(counts)}
        stats.setdefault(BACKGROUND, 0)
        stats.setdefault(IGNORE, 0)
        return cls(mask, dict(sorted(stats.items())))


def g0_generator(rng_seed: int, position: int = 0) -> np.random.Generator:
    """Counter-based Philox stream keyed by ``(rng_seed, position)``."""
    if rng_seed < 0 or position < 0:
        raise UsageError("rng_seed and position must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(rng_seed), int(position)])))


def guide_g0(saliency, labels, rng_seed: int = 0, position: int = 0) -> GuideResult:
    """Random class assignment: one class drawn uniformly per image.

    ``position`` is the image's index in its manifest, so the draw does not
    depend on processing order.
    """
    sal = check_binary_mask(saliency)
    present = sorted(check_labels(labels))
    cls = present[int(g0_generator(rng_seed, position).integers(len(present)))]
    mask = np.where(sal, cls, BACKGROUND).astype(np.uint8)
    return GuideResult.from_mask(mask)


def _score_pair(entry):
    if isinstance(entry, Mapping):
        return float(entry["full"]), float(entry["masked"])
    full, masked = entry
    return float(full), float(masked)


def g1_component_label(scores_for_component: Mapping, labels) -> int:
    """Class with the largest positive ``masked - full`` difference, else ignore."""
    best_cls, best_diff = IGNORE, 0.0
    for c in sorted(labels):
        full, masked = _score_pair(scores_for_component[c])
        if not (np.isfinite(full) and np.isfinite(masked)):
            raise DataError(f"non-finite G1 score for class {c}")
        diff = masked - full
        if diff > best_diff:
            best_cls, best_diff = c, diff
    return best_cls


def guide_g1(fg: ComponentSet, labels, scores: Mapping) -> GuideResult:
    """Per-component classification from precomputed classifier scores.

    ``scores[k][c]`` holds ``(full, masked)`` (or ``{"full": .., "masked": ..}``)
    for component id ``k`` and image label ``c``. Keys may be ints or strings.
    """
    present = check_labels(labels)
    lut = np.zeros(len(fg) + 1, dtype=np.uint8)
    for rec in fg.records:
        per_comp = _lookup(scores, rec.id)
        if per_comp is None:
            raise DataError(f"missing G1 scores for component {rec.id}")
        table = {}
        for c in present:
            entry = _lookup(per_comp, c)
            if entry is None:
                raise DataError(f"missing G1 score entry for component {rec.id}, class {c}")
            table[c] = entry
        lut[rec.id] = g1_component_label(table, present)
    return GuideResult.from_mask(lut[fg.id_map])


def _lookup(mapping: Mapping, key: int):
    if key in mapping:
        return mapping[key]
    return mapping.get(str(key))


def guide_g2(
    seeds,
    saliency,
    image,
    crf: CrfParams | None = None,
    connectivity: int = 8,
    *,
    area_fraction: float = DEFAULT_AREA_FRACTION,
    region_solver: RegionSolver | None = None,
    approx: bool = False,
) -> GuideResult:
    """Propagate seeds through salient components.

    All intersections are analysed first, then pixels are labelled:

    * salient component touching no seed class -> ignore
    * touching exactly one class -> that class
    * touching several classes -> per-pixel labels from ``region_solver``
      (CRF inference restricted to the component by default)
    * seed pixels outside every retained component -> ignore if the seed
      touches some component, otherwise they keep the seed class

    Salient components smaller than ``area_fraction`` of the image are
    dropped. Everything else is background.

    ``region_solver(component, seeds_in_component, classes, image)`` must
    return a mask whose component pixels carry classes from ``classes``.
    """
    s = check_label_mask(seeds, allow_ignore=False)
    sal = check_binary_mask(saliency)
    img = check_image(image)
    check_same_shape(seeds=s.shape, saliency=sal.shape, image=img.shape)
    if region_solver is None:
        region_solver = partial(_crf_solver, params=crf or PRESETS["v2"], approx=approx)

    fg = filter_by_area(label_components(sal, connectivity), area_fraction)
    seed_cs = label_seed_components(s, connectivity)
    table = intersect(fg, seed_cs)

    out = np.zeros(s.shape, dtype=np.uint8)
    lut = np.zeros(len(fg) + 1, dtype=np.uint8)
    multi = []
    for rec in fg.records:
        classes = table.categories(rec.id)
        if not classes:
            lut[rec.id] = IGNORE
        elif len(classes) == 1:
            lut[rec.id] = next(iter(classes))
        else:
            multi.append((rec.id, classes))
    in_fg = fg.id_map > 0
    out[in_fg] = lut[fg.id_map[in_fg]]

    for cid, classes in multi:
        comp = fg.id_map == cid
        inside = np.where(comp, s, BACKGROUND).astype(np.uint8)
        labelled = np.asarray(region_solver(comp, inside, frozenset(classes), img))
        vals = labelled[comp]
        if not set(np.unique(vals).tolist()) <= set(classes):
            raise DataError(f"region solver produced labels outside {sorted(classes)}")
        out[comp] = vals

    seed_lut = np.zeros(len(seed_cs) + 1, dtype=np.uint8)
    for rec in seed_cs.records:
        seed_lut[rec.id] = IGNORE if table.touched(rec.id) else rec.cls
    outside = (seed_cs.id_map > 0) & ~in_fg
    out[outside] = seed_lut[seed_cs.id_map[outside]]
    return GuideResult.from_mask(out)


def _crf_solver(component, seeds_in_component, classes, image, *, params, approx):
    return region_crf(component, seeds_in_component, classes, image, params, approx=approx)
