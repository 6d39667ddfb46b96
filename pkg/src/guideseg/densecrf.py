"""Fully connected CRF with Gaussian appearance and smoothness kernels.

Mean-field inference uses synchronous updates and the Potts model: a pixel's
label log-potential gains the kernel-weighted mass its neighbours put on the
same label,

    Q_i(l)  ∝  exp(-U_i(l) + sum_{j != i} k(i, j) Q_j(l)),
    k(i, j) =  w1 exp(-|p_i - p_j|^2 / 2 theta_alpha^2 - |I_i - I_j|^2 / 2 theta_beta^2)
             + w2 exp(-|p_i - p_j|^2 / 2 theta_gamma^2).

Inference runs on an arbitrary set of pixels (a full image or one region).
The exact path evaluates all N^2 pairs and is limited to 16 384 pixels; the
approximate path drops pairs farther apart than 3 * max(theta_alpha,
theta_gamma).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import ResourceError, UsageError
from .maskcore import BACKGROUND, IGNORE, check_binary_mask, check_image, check_label_mask, check_same_shape

EXACT_PIXEL_LIMIT = 128 * 128
PROB_EPS = 1e-5
SEED_CONFIDENCE = 0.9
_CACHE_BYTES = 256 * 2**20
_BLOCK_ELEMENTS = 2**16


@dataclass(frozen=True)
class CrfParams:
    w1: float = 4.0
    theta_alpha: float = 121.0
    theta_beta: float = 5.0
    w2: float = 3.0
    theta_gamma: float = 3.0
    iterations: int = 10

    def __post_init__(self):
        if min(self.theta_alpha, self.theta_beta, self.theta_gamma) <= 0:
            raise UsageError("CRF bandwidths must be positive")
        if min(self.w1, self.w2) < 0:
            raise UsageError("CRF kernel weights must be non-negative")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise UsageError(f"iterations must be a positive integer, got {self.iterations}")

    @classmethod
    def preset(cls, name: str, **overrides) -> "CrfParams":
        try:
            base = PRESETS[name]
        except KeyError:
            raise UsageError(f"unknown CRF preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(**{**base.as_dict(), **overrides})

    def as_dict(self) -> dict:
        return {
            "w1": self.w1,
            "theta_alpha": self.theta_alpha,
            "theta_beta": self.theta_beta,
            "w2": self.w2,
            "theta_gamma": self.theta_gamma,
            "iterations": self.iterations,
        }

    @property
    def truncation_radius(self) -> float:
        return 3.0 * max(self.theta_alpha, self.theta_gamma)


PRESETS = {
    # DeepLab-LargeFOV parameters, the default throughout
    "v2": CrfParams(w1=4.0, theta_alpha=121.0, theta_beta=5.0, w2=3.0, theta_gamma=3.0),
    # SEC parameters
    "v1": CrfParams(w1=10.0, theta_alpha=80.0, theta_beta=13.0, w2=3.0, theta_gamma=3.0),
}


class PairwiseKernel:
    """The combined kernel over a pixel set, applied as a linear operator.

    Squared spatial and colour distances are small integers, exactly
    representable in float32, so every kernel entry is computed from exact
    inputs by the same elementwise formula and ``k(i, j) == k(j, i)`` holds
    bit for bit.

    The exact path stores the whole matrix (float64 up to 256 MiB, float32
    beyond); the approximate path keeps only pairs within the truncation
    radius in a sparse matrix.
    """

    def __init__(self, rows, cols, colors, params: CrfParams, approx: bool = False):
        self.params = params
        self.n = np.size(rows)
        self.approx = approx
        if not approx and self.n > EXACT_PIXEL_LIMIT:
            raise ResourceError(
                f"{self.n} pixels exceed the exact-path limit of {EXACT_PIXEL_LIMIT}; enable the approximate path"
            )
        self.dtype = np.float64 if approx or self.n * self.n * 8 <= _CACHE_BYTES else np.float32
        self.rows = np.asarray(rows).astype(self.dtype)
        self.cols = np.asarray(cols).astype(self.dtype)
        self.colors = np.asarray(colors).reshape(-1, 3).astype(self.dtype)
        self._a = self.dtype(1.0 / (2.0 * params.theta_alpha**2))
        self._b = self.dtype(1.0 / (2.0 * params.theta_beta**2))
        self._g = self.dtype(1.0 / (2.0 * params.theta_gamma**2))
        self._w1 = self.dtype(params.w1)
        self._w2 = self.dtype(params.w2)
        self._sparse = self._build_sparse() if approx else None
        self._dense = None if approx else self._build_dense()

    def _values(self, d2, c2):
        app = np.multiply(d2, self._a)
        app += np.multiply(c2, self._b)
        np.negative(app, out=app)
        np.exp(app, out=app)
        app *= self._w1
        smooth = np.multiply(d2, -self._g)
        np.exp(smooth, out=smooth)
        smooth *= self._w2
        app += smooth
        # subnormals slow BLAS down by an order of magnitude
        app[app < np.finfo(self.dtype).tiny] = 0.0
        return app

    def _pair_terms(self, i, j):
        """Squared spatial and colour distances for broadcastable index arrays."""
        dr = self.rows[i] - self.rows[j]
        d2 = dr * dr
        dc = self.cols[i] - self.cols[j]
        d2 += dc * dc
        c2 = np.zeros_like(d2)
        for ch in range(3):
            diff = self.colors[i, ch] - self.colors[j, ch]
            c2 += diff * diff
        return d2, c2

    def _build_dense(self) -> np.ndarray:
        # |x - y|^2 = |x|^2 + |y|^2 - 2 x.y, exact here because every term is
        # an integer below 2**24
        pos = np.column_stack([self.rows, self.cols])
        pos_sq = (pos * pos).sum(axis=1)
        col_sq = (self.colors * self.colors).sum(axis=1)
        k = np.empty((self.n, self.n), dtype=self.dtype)
        step = max(1, _BLOCK_ELEMENTS // max(self.n, 1))
        for start in range(0, self.n, step):
            sl = slice(start, min(start + step, self.n))
            d2 = pos[sl] @ pos.T
            d2 *= -2
            d2 += pos_sq[sl, None]
            d2 += pos_sq[None, :]
            c2 = self.colors[sl] @ self.colors.T
            c2 *= -2
            c2 += col_sq[sl, None]
            c2 += col_sq[None, :]
            k[sl] = self._values(d2, c2)
        np.fill_diagonal(k, 0.0)
        return k

    def _build_sparse(self):
        pts = np.column_stack([self.rows, self.cols])
        pairs = cKDTree(pts).query_pairs(self.params.truncation_radius, output_type="ndarray")
        if pairs.size == 0:
            return sparse.csr_matrix((self.n, self.n))
        i, j = pairs[:, 0], pairs[:, 1]
        vals = self._values(*self._pair_terms(i, j))
        mat = sparse.coo_matrix(
            (np.concatenate([vals, vals]), (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(self.n, self.n),
        )
        return mat.tocsr()

    def matrix(self) -> np.ndarray:
        """Kernel matrix with a zero diagonal (a dense copy on the sparse path)."""
        if self._sparse is not None:
            return self._sparse.toarray()
        return self._dense

    def apply(self, q: np.ndarray) -> np.ndarray:
        """Messages ``sum_{j != i} k(i, j) q_j`` for an ``(N, L)`` array ``q``."""
        if self._sparse is not None:
            return self._sparse @ q
        qc = np.ascontiguousarray(q, dtype=self.dtype)
        qc[qc < np.finfo(self.dtype).tiny] = 0.0
        return (self._dense @ qc).astype(np.float64)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def mean_field_points(
    unary: np.ndarray,
    kernel: PairwiseKernel,
    iterations: int,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Mean-field on an ``(N, L)`` unary over the pixel set of ``kernel``."""
    unary = np.ascontiguousarray(unary, dtype=np.float64)
    q = _softmax_rows(-unary)
    for it in range(iterations):
        q = _softmax_rows(-unary + kernel.apply(q))
        if callback is not None:
            callback(it, q)
    return q


def _check_unary(unary) -> np.ndarray:
    arr = np.asarray(unary, dtype=np.float64)
    if arr.ndim != 3:
        raise UsageError(f"unary must have shape (L, H, W), got {arr.shape}")
    if arr.shape[0] < 2:
        raise UsageError("unary needs at least 2 labels")
    if not np.all(np.isfinite(arr)):
        raise UsageError("unary contains non-finite values")
    return arr


def mean_field(
    unary,
    image,
    params: CrfParams,
    *,
    approx: bool = False,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Marginals ``Q`` of shape ``(L, H, W)`` after ``params.iterations`` rounds.

    ``unary`` is ``(L, H, W)`` negative log-probabilities; ``image`` is the
    ``(H, W, 3)`` uint8 image the appearance kernel reads. ``callback`` gets
    ``(iteration, Q)`` with ``Q`` flattened to ``(H*W, L)`` after each round.
    """
    u = _check_unary(unary)
    img = check_image(image)
    n_labels, h, w = u.shape
    check_same_shape(unary=(h, w), image=img.shape)
    rows, cols = np.divmod(np.arange(h * w), w)
    kernel = PairwiseKernel(rows, cols, img.reshape(-1, 3), params, approx=approx)
    q = mean_field_points(u.reshape(n_labels, -1).T, kernel, params.iterations, callback)
    return q.T.reshape(n_labels, h, w)


def unary_from_probs(probs, eps: float = PROB_EPS) -> np.ndarray:
    """Clip to [eps, 1], renormalise over labels, return ``-log``."""
    p = np.clip(np.asarray(probs, dtype=np.float64), eps, 1.0)
    p /= p.sum(axis=0, keepdims=True)
    return -np.log(p)


def crf_postproc(probs, image, params: CrfParams, *, approx: bool = False) -> np.ndarray:
    """Refine an ``(L, H, W)`` probability map; returns the per-pixel argmax label index."""
    p = np.asarray(probs)
    if p.ndim != 3 or p.shape[0] < 2:
        raise UsageError(f"probabilities must have shape (L>=2, H, W), got {p.shape}")
    if p.shape[0] > 256:
        raise UsageError("at most 256 labels fit an 8-bit mask")
    q = mean_field(unary_from_probs(p), image, params, approx=approx)
    return np.argmax(q, axis=0).astype(np.uint8)


def label_probs(mask: np.ndarray, label_set: list, confidence: float) -> np.ndarray:
    """``confidence`` on each pixel's own label, the rest spread uniformly.

    Pixels whose value is not in ``label_set`` get a uniform distribution.
    """
    n = len(label_set)
    probs = np.full((n,) + mask.shape, 1.0 / n)
    rest = (1.0 - confidence) / (n - 1)
    for k, lab in enumerate(label_set):
        sel = mask == lab
        probs[:, sel] = rest
        probs[k, sel] = confidence
    return probs


def _check_confidence(confidence: float):
    if not 0.5 < confidence < 1.0:
        raise UsageError(f"confidence must lie in (0.5, 1), got {confidence}")


def crf_seed(
    seeds,
    image,
    params: CrfParams,
    confidence: float = SEED_CONFIDENCE,
    *,
    labels: Iterable[int] = (),
    approx: bool = False,
) -> np.ndarray:
    """Smooth a seed mask with the CRF.

    The label set is background plus every class in ``seeds`` or ``labels``.
    Ignore pixels get uniform unaries and come out with a regular label.
    """
    _check_confidence(confidence)
    s = check_label_mask(seeds)
    img = check_image(image)
    check_same_shape(seeds=s.shape, image=img.shape)
    present = {int(c) for c in np.unique(s)} | {int(c) for c in labels}
    label_set = [BACKGROUND] + sorted(present - {BACKGROUND, IGNORE})
    if len(label_set) == 1:
        return np.where(s == IGNORE, BACKGROUND, s).astype(np.uint8)
    idx = crf_postproc(label_probs(s, label_set, confidence), img, params, approx=approx)
    return np.asarray(label_set, dtype=np.uint8)[idx]


def region_crf(
    component,
    seeds,
    classes: Iterable[int],
    image,
    params: CrfParams,
    *,
    confidence: float = SEED_CONFIDENCE,
    approx: bool = False,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Assign one of ``classes`` to every pixel of ``component`` by CRF inference.

    Seed pixels inside the component put ``confidence`` on their class and
    spread the rest over the other classes; non-seed pixels are uniform.
    Background is not a candidate label. Inference runs over the component's
    pixels only, which is equivalent to running on its bounding box with the
    outside pixels clamped to uniform marginals: a uniform neighbour adds the
    same message to every label and cancels in the normalisation.

    Only component pixels are written into ``out`` (a fresh zero mask when
    omitted), which is returned.
    """
    _check_confidence(confidence)
    label_set = sorted({int(c) for c in classes})
    if len(label_set) < 2:
        raise UsageError(f"region CRF needs at least 2 classes, got {label_set}")
    comp = check_binary_mask(component)
    s = check_label_mask(seeds)
    img = check_image(image)
    check_same_shape(component=comp.shape, seeds=s.shape, image=img.shape)
    if out is None:
        out = np.zeros(comp.shape, dtype=np.uint8)
    rows, cols = np.nonzero(comp)
    if rows.size == 0:
        return out
    probs = label_probs(s[rows, cols], label_set, confidence)
    kernel = PairwiseKernel(rows, cols, img[rows, cols], params, approx=approx)
    q = mean_field_points(unary_from_probs(probs).T, kernel, params.iterations)
    out[rows, cols] = np.asarray(label_set, dtype=np.uint8)[np.argmax(q, axis=1)]
    return out
