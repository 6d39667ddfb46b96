import numpy as np
import pytest

from guideseg import (
    IGNORE,
    PRESETS,
    CrfParams,
    DataError,
    UsageError,
    binarize_saliency,
    guide_g0,
    guide_g1,
    guide_g2,
    label_components,
)
from guideseg.fixtures import SceneSpec, generate_scene, nearest_seed_stub, oracle_g2
from guideseg.guides import GuideResult, g1_component_label
from guideseg.seeder import extract_seeds

DOG, CAT = 12, 8
BLANK = np.zeros((16, 16, 3), dtype=np.uint8)


def square(h, w, r0, r1, c0, c1):
    m = np.zeros((h, w), dtype=bool)
    m[r0:r1, c0:c1] = True
    return m


def stub_g2(seeds, sal, **kw):
    image = np.zeros(seeds.shape + (3,), dtype=np.uint8)
    return guide_g2(seeds, sal, image, region_solver=nearest_seed_stub, **kw).mask


# --- G0


def test_g0_single_label():
    sal = square(8, 8, 2, 6, 2, 6)
    for seed in range(5):
        out = guide_g0(sal, {DOG}, seed).mask
        assert np.array_equal(out, np.where(sal, DOG, 0))


def test_g0_deterministic_and_keyed_by_position():
    sal = square(8, 8, 0, 4, 0, 8)
    a = guide_g0(sal, {DOG, CAT}, 7, position=3).mask
    assert np.array_equal(a, guide_g0(sal, {DOG, CAT}, 7, position=3).mask)
    picks = {int(guide_g0(sal, {DOG, CAT}, 7, position=p).mask.max()) for p in range(40)}
    assert picks == {DOG, CAT}


def test_g0_binomial_balance():
    sal = np.ones((1, 1), dtype=bool)
    n = 10_000
    hits = sum(guide_g0(sal, {1, 2}, s).mask.item() == 1 for s in range(n))
    sigma = (n * 0.25) ** 0.5
    assert abs(hits - n / 2) <= 3 * sigma


def test_g0_rejects_negative_seed():
    with pytest.raises(UsageError):
        guide_g0(np.ones((2, 2), bool), {1}, -1)


# --- G1


def test_g1_positive_difference_wins():
    entry = {DOG: {"full": 0.1, "masked": 1.3}, CAT: {"full": 0.5, "masked": 0.2}}
    assert g1_component_label(entry, {DOG, CAT}) == DOG


def test_g1_no_positive_difference_is_ignore():
    entry = {DOG: (0.4, 0.3), CAT: (0.5, 0.0)}
    assert g1_component_label(entry, {DOG, CAT}) == IGNORE


def test_g1_string_keys_and_missing_entries():
    sal = square(10, 10, 0, 5, 0, 5) | square(10, 10, 7, 10, 7, 10)
    fg = label_components(sal)
    scores = {"1": {"3": [0.0, 0.4]}, "2": {"3": [0.5, 0.1]}}
    out = guide_g1(fg, {3}, scores).mask
    assert np.all(out[fg.id_map == 1] == 3)
    assert np.all(out[fg.id_map == 2] == IGNORE)
    assert np.all(out[fg.id_map == 0] == 0)
    with pytest.raises(DataError):
        guide_g1(fg, {3}, {"1": scores["1"]})
    with pytest.raises(DataError):
        guide_g1(fg, {3, 4}, scores)


def test_g1_random_argmax_oracle(rng):
    for _ in range(30):
        sal = rng.random((12, 12)) < 0.45
        fg = label_components(sal)
        labels = sorted(int(c) for c in rng.choice(np.arange(1, 6), size=rng.integers(1, 4), replace=False))
        scores = {k: {c: (float(rng.normal()), float(rng.normal())) for c in labels} for k in range(1, len(fg) + 1)}
        out = guide_g1(fg, labels, scores).mask
        for k in range(1, len(fg) + 1):
            diffs = {c: scores[k][c][1] - scores[k][c][0] for c in labels}
            best = max(diffs, key=lambda c: (diffs[c], -c))
            want = best if diffs[best] > 0 else IGNORE
            assert np.all(out[fg.id_map == k] == want)


# --- G2 rules


def test_g2_one_category_fills_component():
    sal = square(16, 16, 2, 10, 2, 10)
    seeds = np.zeros((16, 16), dtype=np.uint8)
    seeds[4:6, 4:6] = DOG
    out = guide_g2(seeds, sal, BLANK).mask
    assert np.array_equal(out, np.where(sal, DOG, 0))


def test_g2_no_seed_component_is_ignored():
    sal = square(16, 16, 2, 10, 2, 10)
    out = guide_g2(np.zeros((16, 16), np.uint8), sal, BLANK).mask
    assert np.array_equal(out, np.where(sal, IGNORE, 0))


def test_g2_isolated_seed_kept():
    sal = square(16, 16, 0, 4, 0, 4)
    seeds = np.zeros((16, 16), dtype=np.uint8)
    seeds[10:13, 10:13] = DOG
    out = guide_g2(seeds, sal, BLANK).mask
    assert np.all(out[10:13, 10:13] == DOG)
    assert np.all(out[sal] == IGNORE)


def test_g2_bleeding_seed_is_ignored_outside():
    sal = square(16, 16, 2, 8, 2, 8)
    seeds = np.zeros((16, 16), dtype=np.uint8)
    seeds[4:6, 6:12] = CAT  # crosses the component edge at column 8
    out = guide_g2(seeds, sal, BLANK).mask
    assert np.all(out[sal] == CAT)
    assert np.all(out[4:6, 8:12] == IGNORE)
    assert (out == IGNORE).sum() == 8


def test_g2_seed_spanning_two_components():
    sal = square(16, 16, 0, 6, 0, 6) | square(16, 16, 0, 6, 9, 15)
    seeds = np.zeros((16, 16), dtype=np.uint8)
    seeds[2, 3:12] = DOG  # bridges the gap between the components
    out = guide_g2(seeds, sal, BLANK).mask
    assert np.all(out[sal] == DOG)
    assert np.all(out[2, 6:9] == IGNORE)


def test_g2_multi_category_calls_solver():
    sal = square(16, 16, 2, 12, 2, 12)
    seeds = np.zeros((16, 16), dtype=np.uint8)
    seeds[3, 3] = DOG
    seeds[10, 10] = CAT
    calls = []

    def solver(comp, inside, classes, image):
        calls.append((comp.sum(), classes, sorted(np.unique(inside[comp]).tolist())))
        return nearest_seed_stub(comp, inside, classes, image)

    out = guide_g2(seeds, sal, BLANK, region_solver=solver).mask
    assert calls == [(100, frozenset({DOG, CAT}), [0, CAT, DOG])]
    assert out[3, 3] == DOG and out[10, 10] == CAT
    assert set(np.unique(out[sal]).tolist()) == {DOG, CAT}


def test_g2_multi_category_with_crf():
    image = np.zeros((16, 16, 3), dtype=np.uint8)
    image[:, 7:] = [200, 200, 200]
    sal = square(16, 16, 2, 12, 2, 12)
    seeds = np.zeros((16, 16), dtype=np.uint8)
    seeds[5:8, 3:5] = DOG
    seeds[5:8, 9:11] = CAT
    out = guide_g2(seeds, sal, image, PRESETS["v2"]).mask
    assert np.all(out[2:12, 2:7] == DOG)
    assert np.all(out[2:12, 7:12] == CAT)
    assert np.all(out[~sal] == 0)


def test_g2_solver_output_validated():
    sal = square(16, 16, 2, 12, 2, 12)
    seeds = np.zeros((16, 16), dtype=np.uint8)
    seeds[3, 3], seeds[10, 10] = DOG, CAT
    with pytest.raises(DataError):
        guide_g2(seeds, sal, BLANK, region_solver=lambda c, s, k, i: np.full(c.shape, 99, np.uint8))


def test_g2_single_class_component_wins_over_other_bleed():
    # a dog seed bleeding into a cat-only component: that component stays cat,
    # the dog pixels outside every component become ignore
    sal = square(16, 16, 0, 6, 0, 6) | square(16, 16, 0, 6, 10, 16)
    seeds = np.zeros((16, 16), dtype=np.uint8)
    seeds[2, 11:14] = CAT
    seeds[2:4, 4:8] = DOG
    out = stub_g2(seeds, sal)
    assert np.all(out[square(16, 16, 0, 6, 0, 6)] == DOG)
    assert np.all(out[square(16, 16, 0, 6, 10, 16)] == CAT)
    assert np.all(out[2:4, 6:8] == IGNORE)


def test_g2_small_components_dropped():
    sal = np.zeros((32, 32), dtype=bool)
    sal[0, :10] = True  # 10 px < ceil(0.01 * 1024)
    seeds = np.zeros((32, 32), dtype=np.uint8)
    seeds[0, 0] = DOG
    out = stub_g2(seeds, sal)
    assert out[0, 0] == DOG
    assert not out[0, 1:].any()


def test_g2_rejects_bad_inputs():
    with pytest.raises(UsageError):
        guide_g2(np.zeros((4, 4), np.uint8), np.zeros((4, 5), bool), np.zeros((4, 4, 3), np.uint8))
    with pytest.raises(DataError):
        guide_g2(np.full((4, 4), 255, np.uint8), np.zeros((4, 4), bool), np.zeros((4, 4, 3), np.uint8))


# --- G2 invariants


def random_instance(rng, h=20, w=20):
    sal = np.zeros((h, w), dtype=bool)
    for _ in range(rng.integers(1, 4)):
        r, c = rng.integers(0, h), rng.integers(0, w)
        sal[max(0, r - 4):r + 4, max(0, c - 4):c + 4] = True
    seeds = np.zeros((h, w), dtype=np.uint8)
    for _ in range(rng.integers(0, 6)):
        r, c = rng.integers(0, h), rng.integers(0, w)
        seeds[r:r + rng.integers(1, 4), c:c + rng.integers(1, 4)] = rng.integers(1, 4)
    return seeds, sal


def test_g2_empty_saliency_returns_seeds(rng):
    for _ in range(20):
        seeds, _ = random_instance(rng)
        assert np.array_equal(stub_g2(seeds, np.zeros_like(seeds, dtype=bool)), seeds)


def test_g2_empty_seeds_gives_background_and_ignore(rng):
    for _ in range(20):
        _, sal = random_instance(rng)
        out = stub_g2(np.zeros(sal.shape, np.uint8), sal)
        assert set(np.unique(out).tolist()) <= {0, IGNORE}


def test_stats_sum_to_pixels(rng):
    seeds, sal = random_instance(rng)
    res = guide_g2(seeds, sal, np.zeros(seeds.shape + (3,), np.uint8))
    assert sum(res.stats.values()) == seeds.size
    assert 0 in res.stats and IGNORE in res.stats
    assert GuideResult.from_mask(np.zeros((2, 2), np.uint8)).stats == {0: 4, IGNORE: 0}


def test_class_permutation_equivariance(rng):
    perm = np.arange(256, dtype=np.uint8)
    perm[1:4] = [3, 1, 2]
    for _ in range(20):
        seeds, sal = random_instance(rng)
        image = rng.integers(0, 256, seeds.shape + (3,), dtype=np.uint8)
        base = guide_g2(seeds, sal, image, PRESETS["v2"]).mask
        moved = guide_g2(perm[seeds], sal, image, PRESETS["v2"]).mask
        assert np.array_equal(perm[base], moved)
        assert np.array_equal(perm[stub_g2(seeds, sal)], stub_g2(perm[seeds], sal))
    labels = {1, 3}
    g0 = guide_g0(sal, labels, 4).mask
    assert set(np.unique(g0).tolist()) <= {0, 1, 3}


def test_matches_oracle_on_scenes():
    for i in range(40):
        scene = generate_scene(SceneSpec(seed=i, noise_amplitude=0.1, seed_coverage=0.6, distractors=1))
        seeds = extract_seeds(scene.scores, scene.labels or {1})
        sal = binarize_saliency(scene.saliency)
        for conn in (4, 8):
            assert np.array_equal(stub_g2(seeds, sal, connectivity=conn), oracle_g2(seeds, sal, conn))


def test_oracle_trivial_cases_agree():
    sal = square(16, 16, 2, 10, 2, 10)
    seeds = np.zeros((16, 16), np.uint8)
    seeds[4, 4] = DOG
    seeds[13:15, 13:15] = CAT
    assert np.array_equal(oracle_g2(seeds, sal), stub_g2(seeds, sal))
    assert np.array_equal(oracle_g2(np.zeros_like(seeds), sal), np.where(sal, IGNORE, 0))


def test_custom_crf_params_accepted():
    sal = square(16, 16, 2, 12, 2, 12)
    seeds = np.zeros((16, 16), np.uint8)
    seeds[3, 3], seeds[10, 10] = DOG, CAT
    out = guide_g2(seeds, sal, BLANK, CrfParams(iterations=3), approx=True).mask
    assert set(np.unique(out[sal]).tolist()) <= {DOG, CAT}
