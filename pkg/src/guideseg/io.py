"""File formats: SGSM score maps, indexed-PNG label masks, binary masks, RGB images.

SGSM layout (all little-endian)::

    offset  size  field
    0       4     magic b"SGSM"
    4       4     u32 version (= 1)
    8       4     u32 C
    12      4     u32 H
    16      4     u32 W
    20      4*CHW float32 payload, channel-major, row-major within a channel
"""

from __future__ import annotations

import os
import struct

import numpy as np
from PIL import Image

from .errors import DataError, FormatError, UsageError
from .maskcore import (
    binarize_saliency,
    check_binary_mask,
    check_image,
    check_label_mask,
    check_score_map,
)

SGSM_MAGIC = b"SGSM"
SGSM_VERSION = 1
SGSM_HEADER = struct.Struct("<4sIIII")


def pascal_palette(n: int = 256) -> np.ndarray:
    """The standard Pascal VOC colormap as an ``(n, 3)`` uint8 array."""
    cmap = np.zeros((n, 3), dtype=np.uint8)
    for i in range(n):
        r = g = b = 0
        c = i
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        cmap[i] = (r, g, b)
    return cmap


_PALETTE_BYTES = pascal_palette().tobytes()


def encode_score_map(scores) -> bytes:
    arr = check_score_map(scores)
    c, h, w = arr.shape
    header = SGSM_HEADER.pack(SGSM_MAGIC, SGSM_VERSION, c, h, w)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_score_map(buf: bytes) -> np.ndarray:
    if len(buf) < SGSM_HEADER.size:
        raise FormatError(f"truncated SGSM header: file ends at byte offset {len(buf)}, header needs {SGSM_HEADER.size}")
    magic, version, c, h, w = SGSM_HEADER.unpack_from(buf, 0)
    if magic != SGSM_MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte offset 0, expected {SGSM_MAGIC!r}")
    if version != SGSM_VERSION:
        raise FormatError(f"unsupported SGSM version {version} at byte offset 4")
    for offset, (name, value) in zip((8, 12, 16), (("C", c), ("H", h), ("W", w))):
        if value == 0:
            raise FormatError(f"zero dimension {name} at byte offset {offset}")
    expected = SGSM_HEADER.size + 4 * c * h * w
    if len(buf) < expected:
        raise FormatError(f"truncated SGSM payload: file ends at byte offset {len(buf)}, expected {expected} bytes")
    if len(buf) > expected:
        raise FormatError(f"trailing bytes after SGSM payload starting at byte offset {expected}")
    arr = np.frombuffer(buf, dtype="<f4", count=c * h * w, offset=SGSM_HEADER.size)
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise DataError(f"non-finite score at byte offset {SGSM_HEADER.size + 4 * int(bad[0])}")
    return arr.astype(np.float32).reshape(c, h, w)


def read_score_map(path) -> np.ndarray:
    """Read an SGSM file into a ``(C, H, W)`` float32 array."""
    with open(path, "rb") as f:
        return decode_score_map(f.read())


def write_score_map(scores, path) -> None:
    data = encode_score_map(scores)
    with open(path, "wb") as f:
        f.write(data)


def is_score_map_file(path) -> bool:
    with open(path, "rb") as f:
        return f.read(4) == SGSM_MAGIC


def _open_image(path) -> Image.Image:
    try:
        im = Image.open(path)
        im.load()
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    return im


def read_label_mask(path, n_classes: int | None = 20) -> np.ndarray:
    """Read an 8-bit single-channel label mask (indexed PNG or binary PGM).

    Values are returned verbatim; anything outside {0, 1..C, 255} raises
    :class:`DataError`. Pass ``n_classes=None`` to skip the value check.
    """
    im = _open_image(path)
    if im.mode not in ("P", "L"):
        raise FormatError(f"{path}: label masks must be 8-bit single-channel, got mode {im.mode!r}")
    arr = np.array(im, dtype=np.uint8)
    return check_label_mask(arr, n_classes=n_classes)


def write_label_mask(mask, path, n_classes: int | None = None) -> None:
    """Write a label mask as an indexed PNG carrying the Pascal palette.

    A ``.pgm`` suffix writes a binary P5 greymap instead.
    """
    arr = np.ascontiguousarray(check_label_mask(mask, n_classes=n_classes))
    h, w = arr.shape
    if str(path).lower().endswith(".pgm"):
        with open(path, "wb") as f:
            f.write(f"P5\n{w} {h}\n255\n".encode("ascii") + arr.tobytes())
        return
    im = Image.frombytes("P", (w, h), arr.tobytes())
    im.putpalette(_PALETTE_BYTES)
    im.save(path, format="PNG")


def read_binary_mask(path) -> np.ndarray:
    im = _open_image(path)
    if im.mode == "1":
        return np.array(im, dtype=bool)
    if im.mode not in ("L", "P"):
        raise FormatError(f"{path}: binary masks must be 8-bit grayscale, got mode {im.mode!r}")
    arr = np.array(im, dtype=np.uint8)
    if not np.all((arr == 0) | (arr == 255)):
        raise FormatError(f"{path}: binary mask values must be 0 or 255")
    return arr == 255


def write_binary_mask(mask, path) -> None:
    arr = check_binary_mask(mask)
    Image.fromarray(np.where(arr, 255, 0).astype(np.uint8)).save(path, format="PNG")


def read_image(path) -> np.ndarray:
    im = _open_image(path)
    if im.mode != "RGB":
        if im.mode in ("I", "I;16", "F"):
            raise FormatError(f"{path}: expected an 8-bit RGB image, got mode {im.mode!r}")
        im = im.convert("RGB")
    return np.array(im, dtype=np.uint8)


def write_image(image, path) -> None:
    arr = check_image(image)
    Image.fromarray(np.ascontiguousarray(arr)).save(path, format="PNG")


def read_saliency(path) -> np.ndarray:
    """Read a saliency input as a boolean mask.

    SGSM files hold a 1-channel probability map that is binarised at half its
    maximum; anything else is read as a 0/255 binary PNG.
    """
    if not os.path.exists(path):
        raise UsageError(f"saliency file not found: {path}")
    if is_score_map_file(path):
        prob = read_score_map(path)
        return binarize_saliency(prob)
    return read_binary_mask(path)
