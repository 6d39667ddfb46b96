import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from guideseg import DataError, SeederConfig, UsageError, extract_seeds, normalize_scores, seeds_at_thresholds
from oracles import seed_rule


def pixel(c1, c2):
    return np.array([c1, c2], dtype=np.float32).reshape(2, 1, 1)


def test_default_tau():
    assert SeederConfig().tau == 0.2
    assert SeederConfig().restrict_to_image_labels is True


def test_all_below_tau_is_background():
    assert extract_seeds(pixel(0.1, 0.15), {1, 2}).item() == 0


def test_argmax_class():
    assert extract_seeds(pixel(0.9, 0.3), {1, 2}).item() == 1


def test_tie_goes_to_lowest_class():
    assert extract_seeds(pixel(0.5, 0.5), {1, 2}).item() == 1


def test_tau_is_inclusive():
    # background only when strictly below tau
    assert extract_seeds(pixel(0.25, 0.0), {1, 2}, tau=0.25).item() == 1


def test_restriction_hides_absent_classes():
    m = pixel(0.9, 0.3)
    assert extract_seeds(m, {2}).item() == 2
    assert extract_seeds(m, {2}, restrict_to_image_labels=False).item() == 1
    assert extract_seeds(pixel(0.9, 0.1), {2}).item() == 0


def test_labels_required_when_restricting():
    with pytest.raises(UsageError):
        extract_seeds(pixel(0.9, 0.3))
    assert extract_seeds(pixel(0.9, 0.3), restrict_to_image_labels=False).item() == 1


def test_rejects_unnormalised_scores():
    with pytest.raises(DataError):
        extract_seeds(pixel(1.5, 0.0), {1})


@pytest.mark.parametrize("tau", [-0.1, 1.1])
def test_rejects_bad_tau(tau):
    with pytest.raises(UsageError):
        SeederConfig(tau=tau)


def test_label_outside_channels():
    with pytest.raises(UsageError):
        extract_seeds(pixel(0.9, 0.3), {3})


def test_per_pixel_oracle_200_maps():
    rng = np.random.default_rng(1)
    for _ in range(200):
        scores = normalize_scores(rng.random((2, 8, 8), dtype=np.float32))
        labels = {int(v) for v in rng.choice([1, 2], size=rng.integers(1, 3), replace=False)}
        tau = float(rng.choice([0.05, 0.2, 0.5, 0.8]))
        for restrict in (True, False):
            got = extract_seeds(scores, labels, tau=tau, restrict_to_image_labels=restrict)
            assert np.array_equal(got, seed_rule(scores, labels, tau, restrict))


def test_tau_one_keeps_only_channel_maxima():
    rng = np.random.default_rng(2)
    scores = normalize_scores(rng.random((3, 6, 6), dtype=np.float32))
    out = seeds_at_thresholds(scores, {1, 2, 3}, [1.0])[0]
    expected = np.zeros((6, 6), dtype=np.uint8)
    for c in reversed(range(3)):  # shared maxima go to the lowest class
        expected[scores[c] == 1.0] = c + 1
    assert np.array_equal(out, expected)


def test_tau_zero_has_no_background():
    rng = np.random.default_rng(3)
    scores = normalize_scores(rng.random((3, 6, 6), dtype=np.float32))
    assert np.all(seeds_at_thresholds(scores, {1, 3}, [0.0])[0] > 0)


def test_thresholds_must_descend():
    s = pixel(0.5, 0.5)
    for taus in ([0.2, 0.5], [0.5, 0.5], []):
        with pytest.raises(UsageError):
            seeds_at_thresholds(s, {1}, taus)


def test_thresholds_match_single_calls():
    rng = np.random.default_rng(4)
    scores = normalize_scores(rng.random((4, 9, 9), dtype=np.float32))
    taus = [0.8, 0.5, 0.2]
    for tau, m in zip(taus, seeds_at_thresholds(scores, {1, 4}, taus)):
        assert np.array_equal(m, extract_seeds(scores, {1, 4}, tau=tau))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float32, (3, 6, 6), elements=st.floats(0, 1, width=32)), st.sets(st.integers(1, 3), min_size=1))
def test_nesting_and_label_stability(scores, labels):
    masks = seeds_at_thresholds(scores, labels, [0.8, 0.5, 0.2, 0.05])
    for hi, lo in zip(masks, masks[1:]):
        fg = hi > 0
        assert np.all(lo[fg] > 0)
        # the argmax does not depend on tau, so a pixel keeps its class
        assert np.array_equal(lo[fg], hi[fg])
