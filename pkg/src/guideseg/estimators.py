"""scikit-learn style wrappers around the functional API.

The underlying operations are stateless, so ``fit`` only validates the
hyper-parameters and records input geometry; it exists so the steps compose
with ``sklearn.base.clone``, ``get_params`` / ``set_params`` and pipelines.
Each transformer maps a sequence of per-image inputs to a list of outputs.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .densecrf import CrfParams, crf_postproc, crf_seed, mean_field
from .errors import UsageError
from .guides import DEFAULT_AREA_FRACTION, guide_g0, guide_g1, guide_g2
from .maskcore import binarize_saliency, check_score_map, normalize_scores
from .regions import filter_by_area, label_components
from .seeder import SeederConfig, extract_seeds


def _as_list(X):
    if isinstance(X, np.ndarray) and X.ndim == 3 and X.dtype != object:
        return [X]
    return list(X)


class SaliencyBinarizer(TransformerMixin, BaseEstimator):
    """Saliency probability maps -> boolean foreground masks (half-max rule)."""

    def fit(self, X, y=None):
        self.n_maps_seen_ = len(_as_list(X))
        return self

    def transform(self, X):
        check_is_fitted(self)
        return [binarize_saliency(m) for m in _as_list(X)]


class SeedExtractor(TransformerMixin, BaseEstimator):
    """Raw class heatmaps -> seed label masks.

    ``transform(X, labels=...)`` takes one label set per map. Heatmaps are
    normalised first unless ``normalize=False``.
    """

    def __init__(self, tau=0.2, restrict_to_image_labels=True, normalize=True):
        self.tau = tau
        self.restrict_to_image_labels = restrict_to_image_labels
        self.normalize = normalize

    def fit(self, X, y=None):
        maps = _as_list(X)
        SeederConfig(self.tau, self.restrict_to_image_labels)
        channels = {check_score_map(m).shape[0] for m in maps}
        if len(channels) > 1:
            raise UsageError(f"heatmaps disagree on the channel count: {sorted(channels)}")
        self.n_classes_ = channels.pop() if channels else None
        return self

    def transform(self, X, labels=None):
        check_is_fitted(self)
        maps = _as_list(X)
        if labels is None:
            labels = [None] * len(maps)
        if len(labels) != len(maps):
            raise UsageError("need exactly one label set per heatmap")
        cfg = SeederConfig(self.tau, self.restrict_to_image_labels)
        out = []
        for m, lab in zip(maps, labels):
            m = check_score_map(m, n_channels=self.n_classes_)
            if self.normalize:
                m = normalize_scores(m)
            out.append(extract_seeds(m, lab, cfg))
        return out

    def fit_transform(self, X, y=None, labels=None):
        return self.fit(X).transform(X, labels=labels)


class DenseCRF(BaseEstimator):
    """Fully connected CRF; ``preset`` fills any parameter left as ``None``."""

    def __init__(self, preset="v2", w1=None, theta_alpha=None, theta_beta=None, w2=None,
                 theta_gamma=None, iterations=10, approx=False):
        self.preset = preset
        self.w1 = w1
        self.theta_alpha = theta_alpha
        self.theta_beta = theta_beta
        self.w2 = w2
        self.theta_gamma = theta_gamma
        self.iterations = iterations
        self.approx = approx

    def _params(self) -> CrfParams:
        overrides = {k: getattr(self, k) for k in ("w1", "theta_alpha", "theta_beta", "w2", "theta_gamma")
                     if getattr(self, k) is not None}
        overrides["iterations"] = self.iterations
        if self.preset is None:
            return CrfParams(**overrides)
        return CrfParams.preset(self.preset, **overrides)

    def fit(self, X=None, y=None):
        self.params_ = self._params()
        return self

    def predict_proba(self, unary, image):
        """Marginals for an ``(L, H, W)`` unary (negative log-probabilities)."""
        check_is_fitted(self)
        return mean_field(unary, image, self.params_, approx=self.approx)

    def predict(self, probs, image):
        """Argmax label indices after refining an ``(L, H, W)`` probability map."""
        check_is_fitted(self)
        return crf_postproc(probs, image, self.params_, approx=self.approx)

    def refine_seeds(self, seeds, image, confidence=0.9, labels=()):
        check_is_fitted(self)
        return crf_seed(seeds, image, self.params_, confidence, labels=labels, approx=self.approx)


class GuideLabeller(BaseEstimator):
    """Fuse seeds, saliency and image labels into guide masks.

    ``transform`` takes per-image sequences; which ones are needed depends on
    ``strategy``: ``g0`` uses saliency + labels, ``g1`` saliency + labels +
    ``g1_scores``, ``g2`` seeds + saliency + images.
    """

    def __init__(self, strategy="g2", connectivity=8, area_fraction=DEFAULT_AREA_FRACTION,
                 crf=None, rng_seed=0, region_solver=None):
        self.strategy = strategy
        self.connectivity = connectivity
        self.area_fraction = area_fraction
        self.crf = crf
        self.rng_seed = rng_seed
        self.region_solver = region_solver

    def fit(self, X=None, y=None):
        if self.strategy not in ("g0", "g1", "g2"):
            raise UsageError(f"unknown strategy {self.strategy!r}")
        if self.connectivity not in (4, 8):
            raise UsageError("connectivity must be 4 or 8")
        if not 0 <= self.area_fraction <= 1:
            raise UsageError("area_fraction must lie in [0, 1]")
        self.crf_params_ = self.crf if isinstance(self.crf, CrfParams) else CrfParams.preset(self.crf or "v2")
        return self

    def transform(self, saliency, *, seeds=None, images=None, labels=None, g1_scores=None):
        """Returns a list of :class:`~guideseg.guides.GuideResult`."""
        check_is_fitted(self)
        n = len(saliency)
        if self.strategy == "g0":
            return [guide_g0(saliency[i], labels[i], self.rng_seed, position=i) for i in range(n)]
        if self.strategy == "g1":
            out = []
            for i in range(n):
                fg = filter_by_area(label_components(saliency[i], self.connectivity), self.area_fraction)
                out.append(guide_g1(fg, labels[i], g1_scores[i]))
            return out
        return [
            guide_g2(seeds[i], saliency[i], images[i], self.crf_params_, self.connectivity,
                     area_fraction=self.area_fraction, region_solver=self.region_solver)
            for i in range(n)
        ]
