"""Connected components of masks and their seed/saliency overlaps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import UsageError
from .maskcore import BACKGROUND, IGNORE, check_binary_mask, check_label_mask

_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


@dataclass(frozen=True)
class ComponentRecord:
    id: int
    area: int
    bbox: tuple  # (row_min, col_min, row_max, col_max), inclusive
    cls: int | None = None


@dataclass(frozen=True)
class ComponentSet:
    """Dense component ids (1..K, 0 = none) plus one record per component.

    Ids follow the raster order of each component's first pixel.
    """

    id_map: np.ndarray
    records: tuple = ()

    def __len__(self):
        return len(self.records)

    @property
    def shape(self):
        return self.id_map.shape

    def mask(self, cid: int) -> np.ndarray:
        return self.id_map == cid

    def record(self, cid: int) -> ComponentRecord:
        return self.records[cid - 1]


def _structure(connectivity: int):
    try:
        return _STRUCTURES[connectivity]
    except KeyError:
        raise UsageError(f"connectivity must be 4 or 8, got {connectivity}") from None


def _build(raw: np.ndarray, n: int, classes=None) -> ComponentSet:
    """Relabel ``raw`` (ids 1..n, arbitrary order) into raster order of first pixels."""
    flat = raw.ravel()
    if n == 0:
        return ComponentSet(np.zeros(raw.shape, dtype=np.uint32), ())
    nz = np.flatnonzero(flat)
    ids = flat[nz]
    first = np.full(n + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, ids, nz)
    order = np.argsort(first[1:], kind="stable") + 1
    remap = np.zeros(n + 1, dtype=np.uint32)
    remap[order] = np.arange(1, n + 1, dtype=np.uint32)
    id_map = remap[raw]
    areas = np.bincount(id_map.ravel(), minlength=n + 1)
    slices = ndimage.find_objects(id_map)
    records = []
    for new_id in range(1, n + 1):
        sl = slices[new_id - 1]
        bbox = (sl[0].start, sl[1].start, sl[0].stop - 1, sl[1].stop - 1)
        cls = None if classes is None else int(classes[order[new_id - 1]])
        records.append(ComponentRecord(new_id, int(areas[new_id]), bbox, cls))
    return ComponentSet(id_map, tuple(records))


def label_components(mask, connectivity: int = 8) -> ComponentSet:
    """Maximal connected foreground regions of a binary mask."""
    arr = check_binary_mask(mask)
    raw, n = ndimage.label(arr, structure=_structure(connectivity))
    return _build(raw, n)


def label_seed_components(seeds, connectivity: int = 8) -> ComponentSet:
    """Per-class connected components of a seed mask; each record carries its class.

    Background and ignore pixels belong to no component.
    """
    arr = check_label_mask(seeds)
    structure = _structure(connectivity)
    raw = np.zeros(arr.shape, dtype=np.int64)
    classes = [0]
    n = 0
    for c in np.unique(arr):
        if c in (BACKGROUND, IGNORE):
            continue
        lab, k = ndimage.label(arr == c, structure=structure)
        raw[lab > 0] = lab[lab > 0] + n
        classes.extend([int(c)] * k)
        n += k
    return _build(raw, n, classes=np.asarray(classes))


def area_threshold(min_fraction: float, height: int, width: int) -> int:
    """Minimum pixel count ``ceil(min_fraction * H * W)``.

    The product is rounded to 9 decimals first so that e.g. 0.07 * 100 is 7,
    not 8.
    """
    return math.ceil(round(min_fraction * height * width, 9))


def filter_by_area(cs: ComponentSet, min_fraction: float, height: int | None = None, width: int | None = None) -> ComponentSet:
    """Keep components whose area is at least ``ceil(min_fraction * H * W)`` pixels."""
    if not 0.0 <= min_fraction <= 1.0:
        raise UsageError(f"min_fraction must lie in [0, 1], got {min_fraction}")
    h, w = cs.shape if height is None else (height, width)
    thresh = area_threshold(min_fraction, h, w)
    kept = [r for r in cs.records if r.area >= thresh]
    if len(kept) == len(cs.records):
        return cs
    remap = np.zeros(len(cs.records) + 1, dtype=np.uint32)
    records = []
    for new_id, r in enumerate(kept, start=1):
        remap[r.id] = new_id
        records.append(ComponentRecord(new_id, r.area, r.bbox, r.cls))
    return ComponentSet(remap[cs.id_map], tuple(records))


@dataclass(frozen=True)
class IntersectionTable:
    """Pixel overlaps between foreground components and seed components."""

    pairs: tuple  # (fg_id, seed_id, overlap), sorted by (fg_id, seed_id)
    fg_classes: dict = field(default_factory=dict)  # fg_id -> frozenset of seed classes
    seed_fgs: dict = field(default_factory=dict)  # seed_id -> frozenset of fg ids

    def overlap(self, fg_id: int, seed_id: int) -> int:
        for f, s, n in self.pairs:
            if f == fg_id and s == seed_id:
                return n
        return 0

    def categories(self, fg_id: int) -> frozenset:
        return self.fg_classes.get(fg_id, frozenset())

    def touched(self, seed_id: int) -> frozenset:
        return self.seed_fgs.get(seed_id, frozenset())


def intersect(fg: ComponentSet, seeds: ComponentSet) -> IntersectionTable:
    """Exact pixel-overlap counts for every (fg, seed) pair sharing a pixel."""
    if fg.shape != seeds.shape:
        raise UsageError(f"component maps differ in size: {fg.shape} vs {seeds.shape}")
    a = fg.id_map.ravel().astype(np.int64)
    b = seeds.id_map.ravel().astype(np.int64)
    both = (a > 0) & (b > 0)
    if not np.any(both):
        return IntersectionTable((), {}, {})
    codes = a[both] * (len(seeds) + 1) + b[both]
    uniq, counts = np.unique(codes, return_counts=True)
    pairs = []
    fg_classes: dict = {}
    seed_fgs: dict = {}
    for code, n in zip(uniq.tolist(), counts.tolist()):
        f, s = divmod(code, len(seeds) + 1)
        pairs.append((f, s, n))
        fg_classes.setdefault(f, set()).add(seeds.record(s).cls)
        seed_fgs.setdefault(s, set()).add(f)
    return IntersectionTable(
        tuple(pairs),
        {k: frozenset(v) for k, v in fg_classes.items()},
        {k: frozenset(v) for k, v in seed_fgs.items()},
    )
