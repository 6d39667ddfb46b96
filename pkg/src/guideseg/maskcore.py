"""Raster conventions, the class registry and input validation helpers.

In-memory representations are plain numpy arrays:

* score map   -- ``(C, H, W)`` float array, one channel per foreground class
                 (or a single saliency-probability channel)
* label mask  -- ``(H, W)`` uint8, 0 = background, 1..C = classes, 255 = ignore
* binary mask -- ``(H, W)`` bool, True = salient foreground
* RGB image   -- ``(H, W, 3)`` uint8
* image labels -- a set of foreground class indices in 1..C
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DataError, UsageError

BACKGROUND = 0
IGNORE = 255

VOC_CLASSES = (
    "aeroplane",
    "bicycle",
    "bird",
    "boat",
    "bottle",
    "bus",
    "car",
    "cat",
    "chair",
    "cow",
    "diningtable",
    "dog",
    "horse",
    "motorbike",
    "person",
    "pottedplant",
    "sheep",
    "sofa",
    "train",
    "tvmonitor",
)


@dataclass(frozen=True)
class ClassRegistry:
    """Ordered foreground class names; class ``i`` (1-based) is ``names[i - 1]``.

    Index 0 (background) and 255 (ignore) are reserved and never listed.
    """

    names: tuple = field(default=VOC_CLASSES)

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise UsageError("class registry must contain at least one class")
        if any(not isinstance(n, str) or not n for n in names):
            raise UsageError("class names must be non-empty strings")
        if len(set(names)) != len(names):
            raise UsageError("class names must be unique")
        if len(names) >= IGNORE:
            raise UsageError(f"at most {IGNORE - 1} foreground classes fit in an 8-bit mask")

    @property
    def count(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name) + 1
        except ValueError:
            raise UsageError(f"unknown class name {name!r}") from None

    def name(self, index: int) -> str:
        if index == BACKGROUND:
            return "background"
        if index == IGNORE:
            return "ignore"
        if not 1 <= index <= self.count:
            raise UsageError(f"class index {index} outside 1..{self.count}")
        return self.names[index - 1]


def check_score_map(scores, *, n_channels: int | None = None) -> np.ndarray:
    """Validate a ``(C, H, W)`` score map and return it as a float array."""
    arr = np.asarray(scores)
    if arr.ndim != 3:
        raise UsageError(f"score map must be 3-D (C, H, W), got shape {arr.shape}")
    if min(arr.shape) <= 0:
        raise UsageError(f"score map dimensions must be positive, got {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float32)
    if n_channels is not None and arr.shape[0] != n_channels:
        raise UsageError(f"expected {n_channels} score channels, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DataError("score map contains non-finite values")
    return arr


def check_label_mask(mask, *, n_classes: int | None = None, allow_ignore: bool = True) -> np.ndarray:
    """Validate an ``(H, W)`` label mask; values must be 0, 1..C or 255."""
    arr = np.asarray(mask)
    if arr.ndim != 2 or min(arr.shape) <= 0:
        raise UsageError(f"label mask must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer):
            raise DataError(f"label mask must hold integers, got {arr.dtype}")
        if arr.min() < 0 or arr.max() > 255:
            raise DataError("label mask values must fit in 8 bits")
        arr = arr.astype(np.uint8)
    if not allow_ignore and np.any(arr == IGNORE):
        raise DataError("label mask may not contain ignore (255) pixels here")
    if n_classes is not None:
        bad = (arr > n_classes) & (arr != IGNORE)
        if np.any(bad):
            r, c = np.argwhere(bad)[0]
            raise DataError(
                f"label value {int(arr[r, c])} at ({r}, {c}) is neither background, "
                f"a class in 1..{n_classes}, nor ignore"
            )
    return arr


def check_binary_mask(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2 or min(arr.shape) <= 0:
        raise UsageError(f"binary mask must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype != bool:
        arr = arr != 0
    return arr


def check_image(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or min(arr.shape[:2]) <= 0:
        raise UsageError(f"image must have shape (H, W, 3), got {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise DataError("image values must fit in 8 bits")
        arr = arr.astype(np.uint8)
    return arr


def check_labels(labels: Iterable[int], n_classes: int | None = None, *, allow_empty=False) -> frozenset:
    """Validate image-level labels and return them as a frozenset of ints."""
    out = frozenset(int(c) for c in labels)
    if not out and not allow_empty:
        raise UsageError("image label set is empty")
    for c in out:
        if c < 1 or (n_classes is not None and c > n_classes) or c >= IGNORE:
            hi = n_classes if n_classes is not None else IGNORE - 1
            raise UsageError(f"image label {c} outside 1..{hi}")
    return out


def check_same_shape(**shapes):
    """Raise unless all keyword ``name=(H, W)`` shapes agree."""
    items = [(name, tuple(shape)[:2]) for name, shape in shapes.items()]
    ref_name, ref = items[0]
    for name, shape in items[1:]:
        if shape != ref:
            raise UsageError(f"{name} is {shape[0]}x{shape[1]} but {ref_name} is {ref[0]}x{ref[1]}")


def normalize_scores(scores) -> np.ndarray:
    """Scale every channel by its own maximum so that scores lie in [0, 1].

    Negative raw scores are clamped to 0 first; all-zero channels are left
    untouched. The result is float32 and the method is idempotent.
    """
    arr = np.asarray(scores)
    if np.any(np.isnan(arr)):
        raise DataError("score map contains NaN")
    arr = check_score_map(arr).astype(np.float32)
    out = np.maximum(arr, np.float32(0.0))
    peak = out.reshape(out.shape[0], -1).max(axis=1)
    for c in np.flatnonzero(peak > 0):
        out[c] = out[c] / peak[c]
    return out


def binarize_saliency(prob) -> np.ndarray:
    """Foreground where the probability reaches half the map's maximum.

    Accepts a ``(1, H, W)`` map or a bare ``(H, W)`` array. An all-zero map
    yields an empty mask.
    """
    arr = np.asarray(prob)
    if arr.ndim == 2:
        arr = arr[None]
    arr = check_score_map(arr)
    if arr.shape[0] != 1:
        raise UsageError(f"saliency map must have exactly 1 channel, got {arr.shape[0]}")
    if np.any(arr < 0):
        raise DataError("saliency probabilities must be non-negative")
    # 2*v >= max is exact in float64 for float32 inputs
    vals = arr[0].astype(np.float64)
    peak = vals.max()
    if peak <= 0:
        return np.zeros(vals.shape, dtype=bool)
    return 2.0 * vals >= peak
