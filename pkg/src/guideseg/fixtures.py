"""Synthetic scenes and a brute-force G2 oracle for tests.

Randomness comes from a 64-bit linear congruential generator

    x <- (6364136223846793005 * x + 1442695040888963407) mod 2**64

whose top 24 bits give uniforms ``k / 2**24`` that are exact in float32, so
generated fixtures are identical on every platform.
"""

from __future__ import annotations

import json
import math
import os
from collections import deque
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import ndimage

from .errors import UsageError
from .maskcore import BACKGROUND, IGNORE, normalize_scores

LCG_MUL = 6364136223846793005
LCG_INC = 1442695040888963407
_MASK64 = (1 << 64) - 1


class Lcg:
    """Integer LCG stream with vectorised jump-ahead."""

    def __init__(self, seed: int):
        self.state = (int(seed) * 0x9E3779B97F4A7C15 + 1) & _MASK64

    def next(self) -> int:
        self.state = (LCG_MUL * self.state + LCG_INC) & _MASK64
        return self.state

    def randint(self, lo: int, hi: int) -> int:
        """Integer in ``[lo, hi)``."""
        if hi <= lo:
            raise UsageError(f"empty range [{lo}, {hi})")
        return lo + (self.next() >> 32) % (hi - lo)

    def raw(self, n: int) -> np.ndarray:
        """The next ``n`` states as uint64."""
        out = np.empty(n, dtype=np.uint64)
        block = min(n, 256)
        for i in range(block):
            out[i] = self.next()
        if n > block:
            # x[k + block] = A * x[k] + C (mod 2**64)
            a, c = 1, 0
            for _ in range(block):
                a, c = (LCG_MUL * a) & _MASK64, (LCG_MUL * c + LCG_INC) & _MASK64
            a, c = np.uint64(a), np.uint64(c)
            for start in range(block, n, block):
                stop = min(start + block, n)
                out[start:stop] = out[start - block : stop - block] * a + c
            self.state = int(out[-1])
        return out

    def uniform(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        top = (self.raw(n) >> np.uint64(40)).astype(np.float32)
        return (top / np.float32(1 << 24)).reshape(shape)


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    height: int = 32
    width: int = 32
    n_blobs: int = 3
    n_classes: int = 3
    shape: str = "mixed"  # "ellipse", "rect" or "mixed"
    min_radius: int = 3
    max_radius: int = 8
    blur_radius: int = 2
    noise_amplitude: float = 0.1
    seed_coverage: float = 1.0  # fraction of each blob's radius that fires in the heatmap
    distractors: int = 0  # salient blobs that belong to no class
    disjoint: bool = False

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise UsageError("scene canvas must have positive size")
        if self.n_classes < 1 or self.n_blobs < 0:
            raise UsageError("scene needs at least one class and a non-negative blob count")
        if self.shape not in ("ellipse", "rect", "mixed"):
            raise UsageError(f"unknown blob shape {self.shape!r}")
        if not 1 <= self.min_radius <= self.max_radius:
            raise UsageError("need 1 <= min_radius <= max_radius")
        if not 0.0 < self.seed_coverage <= 1.0:
            raise UsageError("seed_coverage must lie in (0, 1]")


# Leaky, low-recall seeds and one distractor object: seed P/R lands near 0.7/0.4
NOISY_SCENE = SceneSpec(height=64, width=64, n_blobs=3, min_radius=5, max_radius=12, blur_radius=3,
                        noise_amplitude=0.1, seed_coverage=0.4, distractors=1)


@dataclass(frozen=True)
class Blob:
    cls: int  # 0 for a distractor
    row: int
    col: int
    ry: int
    rx: int
    kind: str

    def mask(self, h: int, w: int, scale: float = 1.0) -> np.ndarray:
        yy, xx = np.mgrid[0:h, 0:w]
        dy = np.abs(yy - self.row)
        dx = np.abs(xx - self.col)
        ry, rx = max(self.ry * scale, 0.5), max(self.rx * scale, 0.5)
        if self.kind == "rect":
            return (dy <= ry) & (dx <= rx)
        return (dy / ry) ** 2 + (dx / rx) ** 2 <= 1.0


@dataclass
class SyntheticScene:
    spec: SceneSpec
    gt: np.ndarray  # (H, W) uint8
    scores: np.ndarray  # (C, H, W) float32, max-normalised
    saliency: np.ndarray  # (1, H, W) float32 probability map
    image: np.ndarray  # (H, W, 3) uint8
    labels: frozenset = field(default_factory=frozenset)
    blobs: tuple = ()


def box_blur(indicator: np.ndarray, radius: int) -> np.ndarray:
    """Mean over a (2r+1)^2 window with zero padding, from integer window sums."""
    ind = indicator.astype(np.int64)
    if radius <= 0:
        return ind.astype(np.float32)
    padded = np.pad(ind, radius + 1)
    cs = padded.cumsum(0).cumsum(1)
    k = 2 * radius + 1
    h, w = ind.shape
    sums = cs[k:k + h, k:k + w] - cs[0:h, k:k + w] - cs[k:k + h, 0:w] + cs[0:h, 0:w]
    return (sums.astype(np.float32) / np.float32(k * k)).astype(np.float32)


def _place_blobs(spec: SceneSpec, rng: Lcg) -> list:
    blobs = []
    taken = np.zeros((spec.height, spec.width), dtype=bool)
    total = spec.n_blobs + spec.distractors
    for i in range(total):
        cls = rng.randint(1, spec.n_classes + 1) if i < spec.n_blobs else 0
        for _ in range(200):
            ry = rng.randint(spec.min_radius, spec.max_radius + 1)
            rx = rng.randint(spec.min_radius, spec.max_radius + 1)
            row = rng.randint(0, spec.height)
            col = rng.randint(0, spec.width)
            kind = spec.shape if spec.shape != "mixed" else ("ellipse", "rect")[rng.randint(0, 2)]
            blob = Blob(cls, row, col, ry, rx, kind)
            m = blob.mask(spec.height, spec.width)
            if not spec.disjoint:
                break
            if not np.any(ndimage.binary_dilation(m, iterations=2) & taken):
                break
        else:
            raise UsageError(f"could not place {total} disjoint blobs on a {spec.height}x{spec.width} canvas")
        taken |= m
        blobs.append(blob)
    return blobs


def generate_scene(spec: SceneSpec) -> SyntheticScene:
    """Painted blobs plus degraded per-class heatmaps and saliency.

    Heatmap channel ``c`` is the indicator of class-``c`` pixels near blob
    centres (``seed_coverage`` shrinks the firing core), box-blurred, plus
    uniform noise of ``noise_amplitude``, then max-normalised. Saliency is the
    union of all blobs (distractors included) degraded the same way.
    """
    rng = Lcg(spec.seed)
    h, w = spec.height, spec.width
    blobs = _place_blobs(spec, rng)
    gt = np.zeros((h, w), dtype=np.uint8)
    salient = np.zeros((h, w), dtype=bool)
    cores = np.zeros((spec.n_classes, h, w), dtype=bool)
    for b in blobs:
        m = b.mask(h, w)
        salient |= m
        if b.cls:
            gt[m] = b.cls
    for b in blobs:
        if b.cls:
            cores[b.cls - 1] |= b.mask(h, w, spec.seed_coverage) & (gt == b.cls)

    amp = np.float32(spec.noise_amplitude)
    raw = np.stack([box_blur(cores[c], spec.blur_radius) for c in range(spec.n_classes)])
    if amp > 0:
        raw = raw + amp * rng.uniform(raw.shape)
    scores = normalize_scores(raw)
    sal = box_blur(salient, spec.blur_radius)[None]
    if amp > 0:
        sal = sal + amp * rng.uniform(sal.shape)
    saliency = normalize_scores(sal)

    colors = np.array([[40, 40, 40]] + [[(97 * c) % 256, (151 * c + 60) % 256, (211 * c + 120) % 256]
                                         for c in range(1, spec.n_classes + 1)], dtype=np.int64)
    image = colors[gt]
    for b in blobs:
        if not b.cls:
            image[b.mask(h, w) & (gt == 0)] = (200, 200, 200)
    jitter = (rng.raw(h * w * 3) >> np.uint64(59)).astype(np.int64).reshape(h, w, 3)  # 0..31
    image = np.clip(image + jitter - 16, 0, 255).astype(np.uint8)
    labels = frozenset(int(c) for c in np.unique(gt) if c != BACKGROUND)
    return SyntheticScene(spec, gt, scores.astype(np.float32), saliency.astype(np.float32), image, labels, tuple(blobs))


def synthetic_g1_scores(gt: np.ndarray, id_map: np.ndarray, labels) -> dict:
    """Stand-in classifier scores for G1: ``masked - full`` is the class's
    share of the component minus one half, so only a majority class is positive.
    """
    out = {}
    for k in range(1, int(id_map.max()) + 1):
        comp = id_map == k
        area = int(comp.sum())
        out[str(k)] = {
            str(c): {"full": 0.5, "masked": float(np.count_nonzero(gt[comp] == c)) / area}
            for c in sorted(labels)
        }
    return out


def nearest_seed_stub(component, seeds_in_component, classes, image=None) -> np.ndarray:
    """CRF stand-in: each component pixel takes the class of the nearest seed pixel.

    Distances are squared Euclidean; ties go to the lowest class index.
    """
    comp = np.asarray(component, dtype=bool)
    seeds = np.asarray(seeds_in_component)
    classes = sorted(classes)
    rows, cols = np.nonzero(comp)
    best = np.full(rows.shape, np.iinfo(np.int64).max, dtype=np.int64)
    out_vals = np.zeros(rows.shape, dtype=np.uint8)
    for c in classes:
        src = comp & (seeds == c)
        if not src.any():
            continue
        idx = ndimage.distance_transform_edt(~src, return_distances=False, return_indices=True)
        d2 = (idx[0][rows, cols] - rows) ** 2 + (idx[1][rows, cols] - cols) ** 2
        better = d2 < best
        best[better] = d2[better]
        out_vals[better] = c
    out = np.zeros(comp.shape, dtype=np.uint8)
    out[rows, cols] = out_vals
    return out


def _flood(grid, start, same, connectivity, seen):
    h, w = len(grid), len(grid[0])
    if connectivity == 4:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        steps = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    queue = deque([start])
    seen[start[0]][start[1]] = True
    pixels = []
    while queue:
        r, c = queue.popleft()
        pixels.append((r, c))
        for dr, dc in steps:
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and not seen[nr][nc] and same(grid[nr][nc]):
                seen[nr][nc] = True
                queue.append((nr, nc))
    return pixels


def oracle_g2(seeds, saliency, connectivity: int = 8, area_fraction: float = 0.01) -> np.ndarray:
    """Deliberately naive G2 using the nearest-seed stand-in for the CRF.

    Plain Python loops throughout; shares no code with the production path.
    """
    seeds = np.asarray(seeds).tolist()
    sal = np.asarray(saliency, dtype=bool).tolist()
    h, w = len(seeds), len(seeds[0])

    seen = [[False] * w for _ in range(h)]
    fg_components = []
    for r in range(h):
        for c in range(w):
            if sal[r][c] and not seen[r][c]:
                fg_components.append(_flood(sal, (r, c), lambda v: v, connectivity, seen))
    min_area = math.ceil(Fraction(str(area_fraction)) * h * w)
    fg_components = [p for p in fg_components if len(p) >= min_area]
    fg_of = {}
    for k, pixels in enumerate(fg_components):
        for p in pixels:
            fg_of[p] = k

    seen = [[False] * w for _ in range(h)]
    seed_components = []
    for r in range(h):
        for c in range(w):
            v = seeds[r][c]
            if v not in (BACKGROUND, IGNORE) and not seen[r][c]:
                pixels = _flood(seeds, (r, c), lambda x, v=v: x == v, connectivity, seen)
                seed_components.append((v, pixels))

    out = [[BACKGROUND] * w for _ in range(h)]
    for k, pixels in enumerate(fg_components):
        classes = set()
        for cls, spix in seed_components:
            if any(fg_of.get(p) == k for p in spix):
                classes.add(cls)
        if not classes:
            for r, c in pixels:
                out[r][c] = IGNORE
        elif len(classes) == 1:
            only = classes.pop()
            for r, c in pixels:
                out[r][c] = only
        else:
            inside = [(r, c, seeds[r][c]) for r, c in pixels if seeds[r][c] in classes]
            for r, c in pixels:
                best = None
                for sr, sc, cls in inside:
                    key = ((sr - r) ** 2 + (sc - c) ** 2, cls)
                    if best is None or key < best:
                        best = key
                out[r][c] = best[1]

    for cls, spix in seed_components:
        touches = any(p in fg_of for p in spix)
        for p in spix:
            if p not in fg_of:
                out[p[0]][p[1]] = IGNORE if touches else cls
    return np.array(out, dtype=np.uint8)


def write_fixture_set(out_dir, count: int, seed: int = 0, spec: SceneSpec | None = None) -> str:
    """Write ``count`` scenes plus ``manifest.jsonl`` and ``g1_scores.json``.

    Scene ``i`` uses ``spec`` with its seed replaced by ``seed * 1_000_003 + i``.
    Returns the manifest path.
    """
    from .io import write_image, write_label_mask, write_score_map
    from .regions import filter_by_area, label_components
    from .maskcore import binarize_saliency

    spec = spec or NOISY_SCENE
    if count < 0:
        raise UsageError("count must be non-negative")
    os.makedirs(out_dir, exist_ok=True)
    records, g1 = [], {}
    n_classes = spec.n_classes
    for i in range(count):
        scene_spec = SceneSpec(**{**asdict(spec), "seed": seed * 1_000_003 + i})
        scene = generate_scene(scene_spec)
        sid = f"scene{i:05d}"
        paths = {
            "image": f"{sid}.image.png",
            "heatmap": f"{sid}.heatmap.sgsm",
            "saliency": f"{sid}.saliency.sgsm",
            "gt": f"{sid}.gt.png",
        }
        write_image(scene.image, os.path.join(out_dir, paths["image"]))
        write_score_map(scene.scores, os.path.join(out_dir, paths["heatmap"]))
        write_score_map(scene.saliency, os.path.join(out_dir, paths["saliency"]))
        write_label_mask(scene.gt, os.path.join(out_dir, paths["gt"]))
        labels = sorted(scene.labels) or [1]
        records.append({"id": sid, **paths, "labels": labels})
        fg = filter_by_area(label_components(binarize_saliency(scene.saliency)), 0.01)
        g1[sid] = synthetic_g1_scores(scene.gt, fg.id_map, labels)
    manifest = os.path.join(out_dir, "manifest.jsonl")
    with open(manifest, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(os.path.join(out_dir, "g1_scores.json"), "w") as f:
        json.dump(g1, f, sort_keys=True, indent=1)
    with open(os.path.join(out_dir, "classes.json"), "w") as f:
        json.dump({"n_classes": n_classes}, f)
    return manifest
