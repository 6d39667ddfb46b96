import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from guideseg import (
    DenseCRF,
    GuideLabeller,
    SaliencyBinarizer,
    SeedExtractor,
    UsageError,
    binarize_saliency,
    crf_postproc,
    extract_seeds,
    guide_g2,
    normalize_scores,
)
from guideseg.densecrf import PRESETS, CrfParams
from guideseg.fixtures import SceneSpec, generate_scene, nearest_seed_stub


@pytest.fixture
def scenes():
    return [generate_scene(SceneSpec(seed=s, noise_amplitude=0.1, seed_coverage=0.6)) for s in range(3)]


def test_binarizer(scenes):
    maps = [s.saliency for s in scenes]
    out = SaliencyBinarizer().fit(maps).transform(maps)
    for m, o in zip(maps, out):
        assert np.array_equal(o, binarize_saliency(m))


def test_seed_extractor_matches_function(scenes):
    maps = [s.scores * 3 for s in scenes]
    labels = [s.labels for s in scenes]
    est = SeedExtractor(tau=0.3)
    out = est.fit_transform(maps, labels=labels)
    assert est.n_classes_ == 3
    for m, lab, o in zip(maps, labels, out):
        assert np.array_equal(o, extract_seeds(normalize_scores(m), lab, tau=0.3))
    with pytest.raises(UsageError):
        est.transform(maps, labels=labels[:1])


def test_not_fitted():
    with pytest.raises(NotFittedError):
        SeedExtractor().transform([np.zeros((1, 2, 2), np.float32)], labels=[{1}])


def test_params_and_clone():
    est = DenseCRF(preset="v1", w2=5.0)
    assert est.get_params()["w2"] == 5.0
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert est.set_params(iterations=3).fit().params_ == CrfParams.preset("v1", w2=5.0, iterations=3)


def test_dense_crf_predict(rng):
    probs = rng.random((3, 6, 6))
    image = rng.integers(0, 256, (6, 6, 3), dtype=np.uint8)
    est = DenseCRF().fit()
    assert np.array_equal(est.predict(probs, image), crf_postproc(probs, image, PRESETS["v2"]))
    q = est.predict_proba(-np.log(probs), image)
    assert np.allclose(q.sum(axis=0), 1.0)


def test_guide_labeller_g2(scenes):
    sal = [binarize_saliency(s.saliency) for s in scenes]
    seeds = [extract_seeds(s.scores, s.labels) for s in scenes]
    images = [s.image for s in scenes]
    est = GuideLabeller(region_solver=nearest_seed_stub).fit()
    out = est.transform(sal, seeds=seeds, images=images)
    for r, sd, sl, im in zip(out, seeds, sal, images):
        assert np.array_equal(r.mask, guide_g2(sd, sl, im, region_solver=nearest_seed_stub).mask)


def test_guide_labeller_g0_positions(scenes):
    sal = [binarize_saliency(s.saliency) for s in scenes]
    est = GuideLabeller(strategy="g0", rng_seed=5).fit()
    a = est.transform(sal, labels=[{1, 2, 3}] * 3)
    b = clone(est).fit().transform(sal, labels=[{1, 2, 3}] * 3)
    assert all(np.array_equal(x.mask, y.mask) for x, y in zip(a, b))


def test_guide_labeller_validation():
    with pytest.raises(UsageError):
        GuideLabeller(strategy="g9").fit()
    with pytest.raises(UsageError):
        GuideLabeller(connectivity=5).fit()
