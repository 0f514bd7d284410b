import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from homotopica.errors import DegenerateLoading, OddExtent, PreconditionViolated, ShapeMismatch
from homotopica.evaluate import correlation_matrix, match_components
from homotopica.fastica import FastICAOptions
from homotopica.group import gica_fit
from homotopica.hgica import (LEFT, RIGHT, HemispherePair, Volume4D, flip_lr, hgica_fit,
                              homotopy_group, homotopy_report, homotopy_subject,
                              merge_hemispheres, report_from_time_courses, split_hemispheres,
                              _pearson)
from homotopica.simgen import ScenarioSpec, make_case

TIGHT = FastICAOptions(tol=0.0, max_iter=300)


def toy_targets(toy):
    return np.vstack([toy.S_left[0], toy.S_left[1], toy.S_left[2] - toy.S_right[2]])


# ---------------------------------------------------------------- split / merge

def test_symmetric_volume_gives_equal_halves(rng):
    half = rng.normal(size=(3, 4, 2, 5))
    vol = Volume4D(np.concatenate([half, half[::-1]], axis=0))
    p = split_hemispheres(vol)
    np.testing.assert_array_equal(p.left, p.right)


def test_impulse_locality():
    vals = np.zeros((6, 3, 2, 4))
    vals[0, 0, 0, :] = 1.0
    p = split_hemispheres(Volume4D(vals), demean=False)
    assert p.left.shape == (4, 18)
    np.testing.assert_array_equal(p.left[:, 0], 1.0)
    np.testing.assert_array_equal(p.left[:, 1:], 0.0)
    np.testing.assert_array_equal(p.right, 0.0)


def test_vectorization_is_a_fastest():
    vals = np.zeros((4, 3, 1, 1))
    vals[1, 2, 0, 0] = 1.0  # a=1, b=2 in the left half (K=2)
    p = split_hemispheres(Volume4D(vals), demean=False)
    assert np.flatnonzero(p.left[0]).tolist() == [1 + 2 * 2]


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.sampled_from([2, 4, 6]), st.integers(1, 3),
                                    st.integers(1, 3), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_split_merge_roundtrip(values):
    vol = Volume4D(values)
    p = split_hemispheres(vol, demean=False)
    back = merge_hemispheres(p, (values.shape[0] // 2,) + values.shape[1:3])
    np.testing.assert_array_equal(back.values, values)
    # flipping the volume swaps the hemispheres exactly
    q = split_hemispheres(flip_lr(vol), demean=False)
    np.testing.assert_array_equal(q.left, p.right)
    np.testing.assert_array_equal(q.right, p.left)


def test_split_demeans_rows(rng):
    p = split_hemispheres(Volume4D(rng.normal(size=(4, 3, 2, 5)) + 7))
    np.testing.assert_allclose(p.left.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(p.right.mean(axis=1), 0, atol=1e-12)


def test_odd_extent_rejected(rng):
    with pytest.raises(OddExtent):
        Volume4D(rng.normal(size=(5, 2, 1, 3)))


def test_pair_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        HemispherePair(rng.normal(size=(3, 10)), rng.normal(size=(3, 11)))


# ---------------------------------------------------------------- fitting

def test_toy_symmetric_component(toy):
    d = hgica_fit(toy.pairs(), 3, 3)
    C = np.abs(correlation_matrix(d.S_hat, toy_targets(toy)))
    assert C[:, 0].max() >= 0.95
    assert d.S_hat.shape == (3, 50)


@pytest.mark.xfail(strict=True, reason=(
    "after per-block whitening the six stacked blocks span four map directions; "
    "keeping three leaves a lateral-pattern ceiling near 0.88 (see the ceiling test)"))
def test_toy_lateral_and_difference_components(toy):
    d = hgica_fit(toy.pairs(), 3, 3)
    C = np.abs(correlation_matrix(d.S_hat, toy_targets(toy)))
    assert C[:, 1].max() >= 0.95 and C[:, 2].max() >= 0.95


def test_toy_retained_subspace_ceiling(toy):
    """Best possible correlation of each target with the span ICA works in."""
    d = hgica_fit(toy.pairs(), 3, 3)
    Q, _ = np.linalg.qr(d.group_whitening.Z.T)
    ceil = []
    for t in toy_targets(toy):
        t = t - t.mean()
        ceil.append(np.linalg.norm(Q.T @ t) / np.linalg.norm(t))
    assert ceil[0] == pytest.approx(1.0, abs=1e-9)
    assert ceil[1] < 0.95
    # ICA output cannot beat the ceiling
    C = np.abs(correlation_matrix(d.S_hat, toy_targets(toy)))
    assert np.all(C.max(axis=0) <= np.array(ceil) + 1e-9)


def test_homotopic_blocks_identical(case1_clean):
    d = hgica_fit(case1_clean.pairs(), 3, 3)
    for i in range(3):
        np.testing.assert_allclose(d.time_courses(i, LEFT), d.time_courses(i, RIGHT), atol=1e-6)
    m = match_components(d.S_hat, case1_clean.S_left)
    assert np.all(m.correlations >= 0.99)


def test_stacking_order(small_case1):
    d = hgica_fit(small_case1.pairs(), 3)
    assert d.blocks == [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)]
    d2 = hgica_fit(small_case1.pairs(), 3, stacking="interleaved")
    assert d2.blocks == [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]


def noisy_pairs(sd=2.0, seed=4):
    spec = ScenarioSpec(case="mixed", grid=(40, 40), block_size=6, noise_sd=sd, seed=seed)
    return make_case(spec).pairs()


def test_interleaved_stacking_invariance():
    pairs = noisy_pairs()
    a = hgica_fit(pairs, 3, options=TIGHT)
    b = hgica_fit(pairs, 3, options=TIGHT, stacking="interleaved")
    m = match_components(b.S_hat, a.S_hat)
    assert np.all(m.correlations >= 1 - 1e-8)
    for i in range(3):
        for h in (LEFT, RIGHT):
            np.testing.assert_allclose(b.time_courses(i, h)[:, m.permutation] * m.signs,
                                       a.time_courses(i, h), atol=1e-6)


def test_hemisphere_swap_symmetry():
    pairs = noisy_pairs()
    swapped = [HemispherePair(p.right, p.left, p.subject_id) for p in pairs]
    a = hgica_fit(pairs, 3, options=TIGHT)
    b = hgica_fit(swapped, 3, options=TIGHT)
    m = match_components(b.S_hat, a.S_hat)
    assert np.all(m.correlations >= 1 - 1e-8)
    for i in range(3):
        np.testing.assert_allclose(b.time_courses(i, RIGHT)[:, m.permutation] * m.signs,
                                   a.time_courses(i, LEFT), atol=1e-6)
    ra, rb = homotopy_report(a), homotopy_report(b)
    np.testing.assert_allclose(rb.per_subject[:, m.permutation], ra.per_subject, atol=1e-8)


# ---------------------------------------------------------------- homotopy

def test_homotopy_noise_free_is_one(case1_clean):
    d = hgica_fit(case1_clean.pairs(), 3)
    for k in range(3):
        assert homotopy_group(d, k) == pytest.approx(1.0, abs=1e-6)
        for i in range(3):
            assert homotopy_subject(d, i, k) == pytest.approx(1.0, abs=1e-6)


def test_homotopy_anti_symmetric_is_minus_one(case1_clean):
    pairs = [HemispherePair(p.left, -p.left, p.subject_id) for p in case1_clean.pairs()]
    rep = homotopy_report(hgica_fit(pairs, 3))
    np.testing.assert_allclose(rep.per_subject, -1.0, atol=1e-6)
    np.testing.assert_allclose(rep.group, -1.0, atol=1e-6)


def test_homotopy_null_correlation():
    # under independence P(|r| <= 0.25) = 0.99918 for T = 176 (t-distribution oracle)
    rng = np.random.default_rng(0)
    r = np.array([_pearson(rng.normal(size=176), rng.normal(size=176)) for _ in range(4000)])
    assert np.mean(np.abs(r) <= 0.25) >= 0.99


def test_group_homotopy_is_correlation_of_concatenation():
    d = hgica_fit(noisy_pairs(), 3)
    for k in range(3):
        L = np.concatenate([d.time_courses(i, LEFT)[:, k] for i in range(3)])
        R = np.concatenate([d.time_courses(i, RIGHT)[:, k] for i in range(3)])
        assert homotopy_group(d, k) == pytest.approx(np.corrcoef(L, R)[0, 1], abs=1e-12)


def test_lateralized_source_flagged():
    spec = ScenarioSpec(case="lateralized", grid=(40, 40), block_size=6, noise_sd=0.5, seed=2)
    rep = homotopy_report(hgica_fit(make_case(spec).pairs(), 3))
    nd = rep.near_degenerate()
    assert nd.all(axis=0).any()
    assert np.all(rep.right_norm < rep.left_norm)
    assert any(c["near_degenerate"] for c in rep.to_dict()["components"])


def test_degenerate_loading_marked_missing(rng):
    left = [rng.normal(size=(5, 2)) for _ in range(2)]
    right = [x.copy() for x in left]
    right[0][:, 1] = 0.0
    rep = report_from_time_courses(left, right, ["a", "b"])
    assert np.isnan(rep.per_subject[0, 1])
    assert rep.missing.sum() == 1
    assert rep.to_dict()["components"][1]["per_subject"][0]["H"] is None
    with pytest.raises(DegenerateLoading):
        _pearson(np.ones(5), rng.normal(size=5))


def test_homotopy_scale_and_sign_invariance(rng):
    left = [rng.normal(size=(8, 3)) for _ in range(3)]
    right = [x + 0.5 * rng.normal(size=x.shape) for x in left]
    base = report_from_time_courses(left, right)
    scaled = report_from_time_courses([x * 3.0 for x in left], [x * 0.2 for x in right])
    np.testing.assert_allclose(scaled.per_subject, base.per_subject, atol=1e-12)
    flip = np.array([1.0, -1.0, 1.0])
    flipped = report_from_time_courses([x * flip for x in left], [x * flip for x in right])
    np.testing.assert_allclose(np.abs(flipped.group), np.abs(base.group), atol=1e-12)


def test_report_values_bounded():
    rep = homotopy_report(hgica_fit(noisy_pairs(sd=5.0), 3))
    vals = rep.per_subject[~rep.missing]
    assert np.all((vals >= -1) & (vals <= 1))
    d = rep.to_dict()
    assert set(d["components"][0]) == {"k", "group_H", "near_degenerate", "per_subject"}
    assert set(d["components"][0]["per_subject"][0]) == {
        "id", "H", "left_norm", "right_norm", "near_degenerate"}


def test_homotopy_needs_hemispheric_blocks(small_case1):
    d = gica_fit(small_case1.X, 3)
    with pytest.raises(PreconditionViolated, match="homotopy requires hemispheric mixing blocks"):
        homotopy_report(d)
    with pytest.raises(PreconditionViolated):
        homotopy_subject(d, 0, 0)


def test_half_width_maps(small_case1):
    h = hgica_fit(small_case1.pairs(), 3)
    g = gica_fit(small_case1.X, 3)
    assert 2 * h.S_hat.shape[1] == g.S_hat.shape[1]
